"""Band-structured frequency-domain signal model.

A received block of N time samples is the unitary IDFT of a frequency-domain
vector whose bins are independent complex Gaussians, nonzero only on a set of
disjoint band intervals. Band 0 is the desired user, band 1 the interferer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BandLayoutError(ValueError):
    pass


@dataclass(frozen=True)
class BandLayout:
    """N bins and a list of disjoint half-open bin intervals [start, stop)."""

    n: int
    bands: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise BandLayoutError(f"n must be >= 1, got {self.n}")
        object.__setattr__(self, "bands", tuple(tuple(b) for b in self.bands))
        for start, stop in self.bands:
            if not (0 <= start < stop <= self.n):
                raise BandLayoutError(f"band [{start}, {stop}) outside [0, {self.n})")
        ivals = sorted(self.bands)
        for (s0, e0), (s1, e1) in zip(ivals, ivals[1:]):
            if s1 < e0:
                raise BandLayoutError(f"bands [{s0},{e0}) and [{s1},{e1}) overlap")

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    def band_size(self, ell: int) -> int:
        start, stop = self.bands[ell]
        return stop - start

    def band_indices(self, ell: int) -> np.ndarray:
        start, stop = self.bands[ell]
        return np.arange(start, stop)

    def band_mask(self, ell: int) -> np.ndarray:
        """Binary 0/1 mask (float) selecting band ell."""
        mask = np.zeros(self.n)
        start, stop = self.bands[ell]
        mask[start:stop] = 1.0
        return mask

    def support_mask(self) -> np.ndarray:
        mask = np.zeros(self.n)
        for start, stop in self.bands:
            mask[start:stop] = 1.0
        return mask


@dataclass
class PriorSpec:
    """Per-bin Gaussian prior: mean mu[i] and variance S[i], zero off-band."""

    layout: BandLayout
    mu: np.ndarray  # complex, length N
    S: np.ndarray  # nonnegative real, length N

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=complex)
        self.S = np.asarray(self.S, dtype=float)
        n = self.layout.n
        if self.mu.shape != (n,) or self.S.shape != (n,):
            raise ValueError("mu and S must have shape (N,)")
        if np.any(self.S < 0):
            raise ValueError("prior variances must be nonnegative")
        off = self.layout.support_mask() == 0
        if np.any(self.mu[off] != 0) or np.any(self.S[off] != 0):
            raise ValueError("mu and S must vanish outside the bands")


@dataclass
class SignalRealization:
    """One draw: frequency-domain x and its time-domain counterpart r = idft(x)."""

    x: np.ndarray
    r: np.ndarray


def dft(r: np.ndarray, n: int | None = None) -> np.ndarray:
    """Unitary DFT (1/sqrt(N) normalization), applied along the last axis."""
    r = np.asarray(r)
    if n is not None and r.shape[-1] != n:
        raise ValueError(f"expected length {n}, got {r.shape[-1]}")
    return np.fft.fft(r, axis=-1) / np.sqrt(r.shape[-1])


def idft(x: np.ndarray, n: int | None = None) -> np.ndarray:
    """Unitary inverse DFT, the adjoint of dft."""
    x = np.asarray(x)
    if n is not None and x.shape[-1] != n:
        raise ValueError(f"expected length {n}, got {x.shape[-1]}")
    return np.fft.ifft(x, axis=-1) * np.sqrt(x.shape[-1])


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-style stream keyed by (experiment seed, trial index)."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) << np.uint64(32) | np.uint64(trial)))


def sample_cgauss(rng: np.random.Generator, mean, var) -> np.ndarray:
    """Circular complex Gaussian: real/imag parts each with variance var/2."""
    mean = np.asarray(mean, dtype=complex)
    std = np.sqrt(np.asarray(var, dtype=float) / 2.0)
    shape = np.broadcast_shapes(mean.shape, std.shape)
    return mean + std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def band_power(ratio_linear: float, n: int, sigma_a2: float, band_size: int) -> float:
    """Per-bin variance S from a linear power ratio: S = ratio*N*sigma_a2/|B|."""
    if band_size <= 0:
        raise ValueError("empty band")
    if ratio_linear < 0:
        raise ValueError("power ratio must be nonnegative")
    return ratio_linear * n * sigma_a2 / band_size


def prior_from_scenario(
    layout: BandLayout,
    snr_db: float,
    inr_db: float,
    sigma_a2: float,
    interferer_known: bool,
    rng: np.random.Generator | None = None,
) -> PriorSpec:
    """Build the two-band prior from SNR/INR (dB relative to sigma_a2).

    Band powers satisfy SNR = S0*|B0|/(N*sigma_a2) and INR = S1*|B1|/(N*sigma_a2).
    A known interferer is drawn into mu over B1 (with S=0 there); the desired
    band is always the unknown case (mu=0, S0>0).
    """
    if layout.n_bands != 2:
        raise ValueError("scenario priors require exactly two bands (desired, interferer)")
    if layout.band_size(0) == 0 or layout.band_size(1) == 0:
        raise ValueError("empty band")
    n = layout.n
    s0 = band_power(10.0 ** (snr_db / 10.0), n, sigma_a2, layout.band_size(0))
    s1 = band_power(10.0 ** (inr_db / 10.0), n, sigma_a2, layout.band_size(1))
    mu = np.zeros(n, dtype=complex)
    S = np.zeros(n)
    S[layout.band_indices(0)] = s0
    if interferer_known:
        if rng is None:
            raise ValueError("rng required to draw a known interferer realization")
        idx = layout.band_indices(1)
        mu[idx] = sample_cgauss(rng, np.zeros(idx.size), s1)
    else:
        S[layout.band_indices(1)] = s1
    return PriorSpec(layout, mu, S)


def sample_signal(prior: PriorSpec, rng: np.random.Generator) -> SignalRealization:
    """Draw x[i] ~ CN(mu[i], S[i]) per bin and its time-domain r."""
    x = sample_cgauss(rng, prior.mu, prior.S)
    x[prior.layout.support_mask() == 0] = 0.0
    return SignalRealization(x=x, r=idft(x))
