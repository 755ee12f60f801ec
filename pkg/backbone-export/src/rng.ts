/** Seeded, dependency-free random streams for weight generation.
 *
 * Every tensor draws from its own stream keyed by (base seed, tensor name),
 * so adding or reordering layers never shifts the weights of the others.
 */

/** FNV-1a 32-bit hash, used to turn tensor names into stream offsets. */
export function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** mulberry32: tiny 32-bit generator with uniform output in [0, 1). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export class TensorRng {
  private readonly next: () => number;
  private spare: number | null = null;

  constructor(baseSeed: number, name: string) {
    this.next = mulberry32((baseSeed ^ fnv1a(name)) >>> 0);
  }

  uniform(): number {
    return this.next();
  }

  /** Standard normal via Box-Muller; caches the second draw of each pair. */
  normal(): number {
    if (this.spare !== null) {
      const value = this.spare;
      this.spare = null;
      return value;
    }
    let u = 0;
    while (u === 0) u = this.next();
    const v = this.next();
    const radius = Math.sqrt(-2 * Math.log(u));
    this.spare = radius * Math.sin(2 * Math.PI * v);
    return radius * Math.cos(2 * Math.PI * v);
  }

  fillNormal(out: Float32Array, std: number): void {
    for (let i = 0; i < out.length; i++) out[i] = this.normal() * std;
  }
}
