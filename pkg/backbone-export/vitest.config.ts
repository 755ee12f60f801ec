import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // Full-resolution reference forward passes take a few seconds each.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
