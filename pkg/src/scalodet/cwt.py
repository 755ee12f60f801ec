"""Continuous wavelet transforms with complex Morlet and Ricker wavelets.

The transform is a cross-correlation of the signal with the scaled,
conjugated mother wavelet, normalized by 1/sqrt(scale). Scales map to
pseudo-frequencies through each wavelet's center frequency (the peak of its
Fourier spectrum). Signal edges are zero-extended; the pipeline discards
edge regions later, so no fancier boundary handling is warranted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import fft as _fft

from .errors import ConfigError, DataError
from .series import MultivariateSeries
from .storage import atomic_write, write_json

# Peak of the Ricker Fourier spectrum (2*pi*f)^2 exp(-(2*pi*f)^2 / 2),
# attained at 2*pi*f = sqrt(2).
RICKER_CENTER_FREQUENCY = math.sqrt(2.0) / (2.0 * math.pi)

# Discretize each scaled wavelet over +/- this many envelope standard
# deviations; beyond that the amplitudes are below 1e-14.
SUPPORT_SIGMAS = 8.0

MORLET = "complex_morlet"
RICKER = "ricker"


@dataclass(frozen=True)
class WaveletSpec:
    """Mother wavelet selector plus the Morlet shape parameters.

    The Morlet defaults follow the common cmor1.5-1.0 convention:
    bandwidth 1.5, center frequency 1.0 cycles/sample.
    """

    kind: str
    morlet_center_frequency: float = 1.0
    morlet_bandwidth: float = 1.5

    def __post_init__(self):
        if self.kind not in (MORLET, RICKER):
            raise ConfigError(f"unknown wavelet kind {self.kind!r}")
        if self.morlet_center_frequency <= 0 or self.morlet_bandwidth <= 0:
            raise ConfigError("Morlet center frequency and bandwidth must be positive")

    @property
    def center_frequency(self) -> float:
        """Spectral peak in cycles/sample at scale 1."""
        if self.kind == MORLET:
            return self.morlet_center_frequency
        return RICKER_CENTER_FREQUENCY

    @property
    def envelope_sigma(self) -> float:
        """Standard deviation of the Gaussian envelope at scale 1."""
        if self.kind == MORLET:
            return math.sqrt(self.morlet_bandwidth / 2.0)
        return 1.0

    @property
    def is_complex(self) -> bool:
        return self.kind == MORLET

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Sample the mother wavelet at times ``t`` (scale 1)."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == MORLET:
            bandwidth = self.morlet_bandwidth
            center = self.morlet_center_frequency
            envelope = (math.pi * bandwidth) ** -0.5 * np.exp(-(t**2) / bandwidth)
            return envelope * np.exp(2j * math.pi * center * t)
        amplitude = 2.0 / (math.sqrt(3.0) * math.pi**0.25)
        return amplitude * (1.0 - t**2) * np.exp(-(t**2) / 2.0)


@dataclass(frozen=True)
class FrequencyGrid:
    """Log-uniform pseudo-frequency grid from 1/n to 0.5 cycles/sample."""

    window_size: int
    pseudo_frequencies: np.ndarray

    def __post_init__(self):
        freqs = np.ascontiguousarray(self.pseudo_frequencies, dtype=np.float64)
        if freqs.ndim != 1 or freqs.size < 2:
            raise ConfigError("frequency grid needs at least 2 points")
        if not np.all(np.diff(freqs) > 0):
            raise ConfigError("grid frequencies must be strictly increasing")
        if freqs[0] <= 0 or freqs[-1] > 0.5:
            raise ConfigError("grid frequencies must lie in (0, 0.5]")
        freqs.setflags(write=False)
        object.__setattr__(self, "pseudo_frequencies", freqs)

    @property
    def point_count(self) -> int:
        return self.pseudo_frequencies.size


def build_frequency_grid(window_size: int, point_count: int) -> FrequencyGrid:
    """Build the log-uniform grid f_j = exp(log(1/n) + j*step), endpoints exact."""
    if window_size < 4:
        raise ConfigError(f"window size must be at least 4, got {window_size}")
    if point_count < 2:
        raise ConfigError(f"frequency grid needs at least 2 points, got {point_count}")
    low = math.log(1.0 / window_size)
    high = math.log(0.5)
    steps = np.arange(point_count, dtype=np.float64)
    freqs = np.exp(low + steps * (high - low) / (point_count - 1))
    freqs[0] = 1.0 / window_size
    freqs[-1] = 0.5
    return FrequencyGrid(window_size=window_size, pseudo_frequencies=freqs)


@dataclass(frozen=True)
class ScalogramStack:
    """Coefficients indexed (wavelet i, dimension d, time t, frequency w).

    Morlet slices hold coefficient moduli (non-negative); Ricker slices hold
    signed reals. Once ``normalized`` is set, every (i, d) slice has unit
    maximum absolute value unless it is identically zero.
    """

    data: np.ndarray
    wavelets: tuple
    grid: FrequencyGrid
    normalized: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 4:
            raise DataError(f"stack data must be 4-D (I, D, T, W), got shape {data.shape}")
        wavelets = tuple(self.wavelets)
        if data.shape[0] != len(wavelets):
            raise DataError(
                f"stack has {data.shape[0]} slices but {len(wavelets)} wavelet specs"
            )
        if data.shape[3] != self.grid.point_count:
            raise DataError(
                f"stack frequency axis {data.shape[3]} does not match grid "
                f"({self.grid.point_count} points)"
            )
        if not np.all(np.isfinite(data)):
            raise DataError("stack contains non-finite coefficients")
        if self.normalized:
            maxima = np.abs(data).max(axis=(2, 3))
            if not np.all((maxima == 1.0) | (maxima == 0.0)):
                raise DataError("normalized stack must have unit per-slice maxima")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "wavelets", wavelets)

    @property
    def wavelet_count(self) -> int:
        return self.data.shape[0]

    @property
    def dimension_count(self) -> int:
        return self.data.shape[1]

    @property
    def length(self) -> int:
        return self.data.shape[2]


def _kernel(wavelet: WaveletSpec, scale: float):
    """Sampled, conjugated, 1/sqrt(a)-normalized wavelet over its support."""
    half = math.ceil(SUPPORT_SIGMAS * wavelet.envelope_sigma * scale)
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    values = np.conj(wavelet.evaluate(offsets / scale)) / math.sqrt(scale)
    return values, half


def cwt(series: MultivariateSeries, wavelet: WaveletSpec, grid: FrequencyGrid) -> np.ndarray:
    """Transform every dimension of ``series``; returns shape (D, T, W).

    The correlation is evaluated by shared-plan FFT convolution: one signal
    FFT per dimension, one kernel FFT per frequency, sized so circular
    wraparound never reaches the extracted window. For the Morlet the modulus
    is returned, for the Ricker the signed real part.
    """
    if series.length < 2:
        raise DataError(f"series too short for a wavelet transform (T={series.length})")
    values = series.values
    dims, length = values.shape
    scales = wavelet.center_frequency / grid.pseudo_frequencies
    kernels = [_kernel(wavelet, float(a)) for a in scales]
    half_max = max(half for _, half in kernels)
    nfft = _fft.next_fast_len(length + 2 * half_max, real=False)
    spectra = np.empty((grid.point_count, nfft), dtype=np.complex128)
    for j, (kernel, _) in enumerate(kernels):
        spectra[j] = _fft.fft(kernel[::-1], n=nfft)
    signal_fft = _fft.fft(values, n=nfft, axis=1)
    out = np.empty((dims, length, grid.point_count))
    for d in range(dims):
        full = _fft.ifft(spectra * signal_fft[d], axis=1)
        for j, (_, half) in enumerate(kernels):
            window = full[j, half : half + length]
            out[d, :, j] = np.abs(window) if wavelet.is_complex else window.real
    return out


def compute_scalograms(series: MultivariateSeries, wavelets, grid: FrequencyGrid) -> ScalogramStack:
    """Run ``cwt`` for every wavelet and stack the results."""
    data = np.stack([cwt(series, w, grid) for w in wavelets])
    return ScalogramStack(data=data, wavelets=tuple(wavelets), grid=grid, normalized=False)


def normalize_stack(stack: ScalogramStack) -> ScalogramStack:
    """Divide each (wavelet, dimension) slice by its maximum absolute value.

    All-zero slices stay zero; zero values stay exactly zero everywhere, so
    the scalogram's sparsity survives normalization. Idempotent: normalizing
    an already-normalized stack returns an equal stack.
    """
    data = stack.data.copy()
    maxima = np.abs(data).max(axis=(2, 3))
    for i in range(data.shape[0]):
        for d in range(data.shape[1]):
            peak = maxima[i, d]
            if peak > 0:
                data[i, d] /= peak
    return replace(stack, data=data, normalized=True)


def dump_stack(stack: ScalogramStack, directory) -> None:
    """Write one NPY per (wavelet, dimension) slice plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(stack.wavelet_count):
        for d in range(stack.dimension_count):
            with atomic_write(directory / f"scalogram_i{i}_d{d}.npy", "wb") as handle:
                np.save(handle, stack.data[i, d])
    meta = {
        "window_size": stack.grid.window_size,
        "pseudo_frequencies": [float(f) for f in stack.grid.pseudo_frequencies],
        "wavelets": [w.kind for w in stack.wavelets],
        "normalized": stack.normalized,
        "shape": list(stack.data.shape),
    }
    write_json(meta, directory / "scalogram_meta.json")
