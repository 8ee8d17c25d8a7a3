"""Memoryless nonlinear receiver chain.

Per time sample: add pre-saturation noise w_a, compress the amplitude with a
phase-preserving tanh soft limiter at power p_sat, add post-saturation noise
w_b, and optionally pass the result through a scalar uniform quantizer applied
to the real and imaginary parts independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectrum import PriorSpec, sample_cgauss


@dataclass(frozen=True)
class QuantizerParams:
    """Mid-rise uniform quantizer: 2^bits levels spanning [-full_scale, +full_scale]."""

    bits: int
    backoff_db: float
    full_scale: float

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be >= 1")
        if self.full_scale <= 0:
            raise ValueError("full_scale must be positive")

    @property
    def step(self) -> float:
        return 2.0 * self.full_scale / 2**self.bits


@dataclass(frozen=True)
class FrontEndParams:
    p_sat: float
    sigma_a2: float
    sigma_b2: float
    quantizer: QuantizerParams | None = None

    def __post_init__(self):
        if self.p_sat <= 0:
            raise ValueError("p_sat must be positive")
        if self.sigma_a2 < 0 or self.sigma_b2 < 0:
            raise ValueError("noise variances must be nonnegative")


def soft_gain(x):
    """tanh(x)/x for x >= 0, with the removable singularity at 0 set to 1.

    Uses the series 1 - x^2/3 + 2x^4/15 below 1e-4 to avoid 0/0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("soft_gain is defined for nonnegative arguments")
    small = x < 1e-4
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - x**2 / 3.0 + 2.0 * x**4 / 15.0, np.tanh(safe) / safe)
    return out if out.ndim else float(out)


def saturate(u, p_sat: float):
    """Phase-preserving amplitude compression sqrt(p_sat)*tanh(|u|/sqrt(p_sat))*e^{j angle(u)}."""
    if p_sat <= 0:
        raise ValueError("p_sat must be positive")
    u = np.asarray(u, dtype=complex)
    return soft_gain(np.abs(u) / np.sqrt(p_sat)) * u


def apply_frontend(r: np.ndarray, params: FrontEndParams, rng: np.random.Generator):
    """Run the noisy saturation chain; returns (y, w_a, w_b).

    The noise realizations are returned so tests can build exact oracles;
    inference sees only y (or its quantized version).
    """
    r = np.asarray(r, dtype=complex)
    w_a = sample_cgauss(rng, np.zeros(r.shape), params.sigma_a2)
    w_b = sample_cgauss(rng, np.zeros(r.shape), params.sigma_b2)
    y = saturate(r + w_a, params.p_sat) + w_b
    return y, w_a, w_b


def _quantize_real(v: np.ndarray, q: QuantizerParams) -> np.ndarray:
    delta = q.step
    k = np.floor((v + q.full_scale) / delta)
    k = np.clip(k, 0, 2**q.bits - 1)
    return -q.full_scale + (k + 0.5) * delta


def quantize(y, q: QuantizerParams):
    """Uniform mid-rise quantization of real and imaginary parts independently."""
    y = np.asarray(y, dtype=complex)
    return _quantize_real(y.real, q) + 1j * _quantize_real(y.imag, q)


def expected_output_power(prior: PriorSpec, fe: FrontEndParams) -> float:
    """Analytic estimate of E|y|^2: min(input power + sigma_a2, p_sat) + sigma_b2."""
    n = prior.layout.n
    p_in = float(np.sum(prior.S) + np.sum(np.abs(prior.mu) ** 2)) / n
    return min(p_in + fe.sigma_a2, fe.p_sat) + fe.sigma_b2


def quantizer_for_scenario(prior: PriorSpec, fe: FrontEndParams, bits: int, backoff_db: float) -> QuantizerParams:
    """Size the clip level A = rms_per_component * 10^(BO/20) from the analytic output power."""
    rms = np.sqrt(expected_output_power(prior, fe) / 2.0)
    return QuantizerParams(bits=bits, backoff_db=backoff_db, full_scale=rms * 10.0 ** (backoff_db / 20.0))
