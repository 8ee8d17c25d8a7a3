"""Linear Wiener baselines, the scalar-gain oracle, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frontend import FrontEndParams
from .spectrum import PriorSpec, dft

RATE_CAP_BITS = 30.0
NMSE_FLOOR_DB = -150.0


@dataclass
class TrialResult:
    estimator: str
    snr_db: float
    inr_db: float
    t_iters: int
    quantized: bool
    rho: float
    rate_bound: float
    nmse_db: float
    seed: int


def linear_wiener(y: np.ndarray, prior: PriorSpec, fe: FrontEndParams) -> np.ndarray:
    """Frequency-domain Wiener estimate that pretends the front-end is linear.

    Deliberately naive: the effective noise is sigma_a2 + sigma_b2 and
    saturation compression is ignored. Returns the estimate restricted to the
    desired band.
    """
    sigma_eff = fe.sigma_a2 + fe.sigma_b2
    z = dft(y)
    gain = np.divide(prior.S, prior.S + sigma_eff, out=np.ones_like(prior.S), where=(prior.S + sigma_eff) > 0)
    xhat = prior.mu + gain * (z - prior.mu)
    return xhat * prior.layout.band_mask(0)


def oracle_estimate(y: np.ndarray, x0_true: np.ndarray, band: np.ndarray) -> np.ndarray:
    """Least-squares complex scalar gain on the desired band, fit to the truth.

    Non-achievable upper bound: a* = <z, x0> / ||z||^2 over B0 per trial.
    """
    z = dft(y)
    n = z.shape[-1]
    zb = z[band]
    denom = float(np.sum(np.abs(zb) ** 2))
    out = np.zeros(n, dtype=complex)
    if denom == 0:
        return out
    a = np.sum(np.conj(zb) * x0_true[band]) / denom
    out[band] = a * zb
    return out


def evaluate(xhat0: np.ndarray, x0_true: np.ndarray, band: np.ndarray):
    """Per-trial (rho, rate bound, NMSE in dB) over the desired-band bins.

    rho is the magnitude of the empirical correlation coefficient; the rate
    bound is -log2(1 - rho), capped; NMSE is floored in dB.
    """
    xh = xhat0[band]
    x = x0_true[band]
    x_energy = float(np.sum(np.abs(x) ** 2))
    if x_energy == 0:
        raise ValueError("true signal is zero on the desired band")
    dxh = xh - xh.mean()
    dx = x - x.mean()
    var_h = float(np.sum(np.abs(dxh) ** 2))
    var_x = float(np.sum(np.abs(dx) ** 2))
    if var_h == 0 or var_x == 0:
        rho = 0.0
    else:
        rho = float(np.abs(np.sum(dxh * np.conj(dx))) / np.sqrt(var_h * var_x))
        rho = min(rho, 1.0)
    if rho >= 1.0 - 2.0**-RATE_CAP_BITS:
        rate = RATE_CAP_BITS
    else:
        rate = float(-np.log2(1.0 - rho))
    nmse = float(np.sum(np.abs(xh - x) ** 2)) / x_energy
    nmse_db = NMSE_FLOOR_DB if nmse <= 10.0 ** (NMSE_FLOOR_DB / 10.0) else float(10.0 * np.log10(nmse))
    return rho, rate, nmse_db


def rate_bound_from_rho(rho: float, squared: bool = False) -> float:
    """-log2(1 - rho); the conventional 1 - rho^2 variant behind a flag."""
    arg = 1.0 - (rho**2 if squared else rho)
    if arg <= 2.0**-RATE_CAP_BITS:
        return RATE_CAP_BITS
    return float(-np.log2(arg))


def pooled_rho(xhats: list[np.ndarray], x0s: list[np.ndarray], band: np.ndarray) -> float:
    """Alternative estimator: correlation pooled across trials instead of per trial."""
    xh = np.concatenate([x[band] for x in xhats])
    x = np.concatenate([x[band] for x in x0s])
    dxh = xh - xh.mean()
    dx = x - x.mean()
    denom = np.sqrt(float(np.sum(np.abs(dxh) ** 2)) * float(np.sum(np.abs(dx) ** 2)))
    if denom == 0:
        return 0.0
    return float(np.abs(np.sum(dxh * np.conj(dx))) / denom)
