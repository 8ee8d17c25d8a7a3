"""Bayesian ML-VAMP reference recursion.

The frequency-domain denoiser is the exact per-bin Wiener conditional mean;
the time-domain denoiser is the posterior mean of a sample behind the noisy
saturation chain, computed by numerical quadrature. This path is a slow
reference used for oracle tests and small comparisons, not for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .frontend import FrontEndParams, saturate
from .spectrum import PriorSpec, dft, idft, sample_cgauss

ALPHA_EPS = 1e-6
GAMMA_MIN, GAMMA_MAX = 1e-8, 1e8

# quadrature grid: nodes per real axis and half-width in prior standard deviations
QUAD_NODES = 65
QUAD_SPAN = 6.0


class QuadratureError(RuntimeError):
    pass


@dataclass
class VampState:
    z0: np.ndarray
    gamma0: float
    z1: np.ndarray | None = None
    gamma1: float | None = None
    xhat: np.ndarray | None = None
    rhat: np.ndarray | None = None
    alpha0: float | None = None
    alpha1: float | None = None


def spectral_denoise(z0: np.ndarray, gamma0: float, prior: PriorSpec):
    """Per-bin Wiener shrinkage toward the prior mean; returns (xhat, alpha0).

    alpha0 is the exact average divergence sum_l (|B_l|/N) * g0*S_l/(1+g0*S_l).
    """
    if gamma0 < 0:
        raise ValueError("gamma0 must be nonnegative")
    gain = gamma0 * prior.S / (1.0 + gamma0 * prior.S)
    xhat = prior.mu + gain * (np.asarray(z0, dtype=complex) - prior.mu)
    return xhat, float(np.mean(gain))


def spectral_denoise_divergence_check(z0: np.ndarray, gamma0: float, prior: PriorSpec, h: float = 1e-4) -> float:
    """Central finite-difference estimate of (1/N) sum_i d xhat[i] / d Re z0[i].

    The denoiser is diagonal, so perturbing every real part at once recovers
    the per-coordinate partials in a single pair of evaluations.
    """
    up, _ = spectral_denoise(np.asarray(z0) + h, gamma0, prior)
    dn, _ = spectral_denoise(np.asarray(z0) - h, gamma0, prior)
    return float(np.mean((up - dn).real / (2.0 * h)))


def _quantizer_log_cell_prob(y_q: np.ndarray, s: np.ndarray, sigma_b2: float, q) -> np.ndarray:
    """log P(quantizer cell of y_q | saturated value s), per complex sample."""
    sb = np.sqrt(sigma_b2 / 2.0)
    total = np.zeros(np.broadcast_shapes(np.shape(y_q), np.shape(s)))
    levels = 2**q.bits
    for vy, vs in ((y_q.real, s.real), (y_q.imag, s.imag)):
        k = np.clip(np.round((vy + q.full_scale - 0.5 * q.step) / q.step), 0, levels - 1)
        lo = -q.full_scale + k * q.step
        hi = lo + q.step
        p_hi = np.where(k == levels - 1, 1.0, ndtr((hi - vs) / sb))
        p_lo = np.where(k == 0, 0.0, ndtr((lo - vs) / sb))
        total = total + np.log(np.maximum(p_hi - p_lo, 1e-300))
    return total


def _log_likelihood(y: np.ndarray, s: np.ndarray, fe: FrontEndParams) -> np.ndarray:
    if fe.quantizer is not None:
        return _quantizer_log_cell_prob(y, s, fe.sigma_b2, fe.quantizer)
    if fe.sigma_b2 <= 0:
        raise QuadratureError("unquantized likelihood needs sigma_b2 > 0")
    return -np.abs(y - s) ** 2 / fe.sigma_b2


def nonlinear_denoise_oracle(
    z1,
    gamma1: float,
    y,
    fe: FrontEndParams,
    n_grid: int = QUAD_NODES,
    span: float = QUAD_SPAN,
    chunk: int = 128,
):
    """Posterior mean/variance of r given y behind the saturation chain.

    The pre-saturation sample u = r + w_a has prior CN(z1, 1/gamma1 +
    sigma_a2); conditioned on u, r is Gaussian in closed form, so only a 2-D
    quadrature over u is needed. The grid is Cartesian, centered at z1 and
    spanning +-span prior standard deviations per component.
    """
    if gamma1 <= 0:
        raise ValueError("gamma1 must be positive")
    z1 = np.atleast_1d(np.asarray(z1, dtype=complex))
    y = np.broadcast_to(np.atleast_1d(np.asarray(y, dtype=complex)), z1.shape)
    tau_u = 1.0 / gamma1 + fe.sigma_a2
    std = np.sqrt(tau_u / 2.0)
    g = np.linspace(-span * std, span * std, n_grid)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    offsets = (gx + 1j * gy).ravel()
    log_prior = -(np.abs(offsets) ** 2) / tau_u

    if fe.sigma_a2 > 0:
        post_prec = gamma1 + 1.0 / fe.sigma_a2
        v_cond = 1.0 / post_prec
    else:
        v_cond = 0.0

    rhat = np.empty_like(z1)
    pvar = np.empty(z1.shape)
    flat_z, flat_y = z1.ravel(), y.ravel()
    for lo in range(0, flat_z.size, chunk):
        zc = flat_z[lo : lo + chunk, None]
        yc = flat_y[lo : lo + chunk, None]
        u = zc + offsets[None, :]
        logp = log_prior[None, :] + _log_likelihood(yc, saturate(u, fe.p_sat), fe)
        if not np.all(np.isfinite(logp)):
            raise QuadratureError("non-finite quadrature weights")
        w = np.exp(logp - logp.max(axis=1, keepdims=True))
        norm = w.sum(axis=1)
        if np.any(norm <= 0) or not np.all(np.isfinite(norm)):
            raise QuadratureError(f"quadrature normalizer failed: min={norm.min():.3e}")
        w /= norm[:, None]
        if fe.sigma_a2 > 0:
            m = (gamma1 * zc + u / fe.sigma_a2) / post_prec
        else:
            m = u
        mean = (w * m).sum(axis=1)
        second = (w * (np.abs(m) ** 2 + v_cond)).sum(axis=1)
        rhat.ravel()[lo : lo + chunk] = mean
        pvar.ravel()[lo : lo + chunk] = np.maximum(second - np.abs(mean) ** 2, 0.0)
    if rhat.size == 1:
        return complex(rhat[0]), float(pvar[0])
    return rhat, pvar


def nonlinear_denoise_mc(
    z1: complex,
    gamma1: float,
    y: complex,
    fe: FrontEndParams,
    n_samples: int,
    rng: np.random.Generator,
    inflate: float = 4.0,
):
    """Importance-sampling estimate of the same posterior, for cross-checks.

    Draws (r, w_a) from a variance-inflated proposal so the weights stay
    usable when the likelihood sits in a prior tail; fully independent of the
    quadrature path.
    """
    tau_r = 1.0 / gamma1
    r = sample_cgauss(rng, np.full(n_samples, complex(z1)), inflate * tau_r)
    w_a = sample_cgauss(rng, np.zeros(n_samples), inflate * fe.sigma_a2 if fe.sigma_a2 > 0 else 0.0)
    logw = _log_likelihood(np.full(n_samples, complex(y)), saturate(r + w_a, fe.p_sat), fe)
    # prior over proposal correction for the inflated draws
    logw = logw - np.abs(r - z1) ** 2 * (1.0 / tau_r - 1.0 / (inflate * tau_r))
    if fe.sigma_a2 > 0:
        logw = logw - np.abs(w_a) ** 2 * (1.0 / fe.sigma_a2 - 1.0 / (inflate * fe.sigma_a2))
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = np.sum(w * r)
    var = float(np.sum(w * np.abs(r) ** 2) - np.abs(mean) ** 2)
    return complex(mean), var


def _clamp_alpha(alpha: float) -> float:
    return float(np.clip(alpha, ALPHA_EPS, 1.0 - ALPHA_EPS))


def _clamp_gamma(gamma: float) -> float:
    return float(np.clip(gamma, GAMMA_MIN, GAMMA_MAX))


def mlvamp_step(state: VampState, prior: PriorSpec, fe: FrontEndParams, y: np.ndarray) -> VampState:
    """One full round of the reference recursion from (z0, gamma0) to the next.

    The gamma0 = 0 initialization is handled by its analytic limit: xhat = mu,
    z1 = idft(mu), gamma1 = 1/mean(S).
    """
    n = prior.layout.n
    if state.gamma0 == 0:
        xhat, alpha0 = prior.mu.copy(), 0.0
        z1 = idft(prior.mu)
        gamma1 = 1.0 / float(np.mean(prior.S))
    else:
        xhat, alpha0 = spectral_denoise(state.z0, state.gamma0, prior)
        a0 = _clamp_alpha(alpha0)
        z1 = idft(xhat - a0 * state.z0) / (1.0 - a0)
        gamma1 = _clamp_gamma(state.gamma0 * (1.0 / a0 - 1.0))
    rhat, pvar = nonlinear_denoise_oracle(z1, gamma1, y, fe)
    alpha1 = gamma1 * float(np.mean(pvar))
    a1 = _clamp_alpha(alpha1)
    z0 = dft(rhat - a1 * z1) / (1.0 - a1)
    gamma0 = _clamp_gamma(gamma1 * (1.0 / a1 - 1.0))
    return VampState(
        z0=z0, gamma0=gamma0, z1=z1, gamma1=gamma1, xhat=xhat, rhat=rhat, alpha0=alpha0, alpha1=alpha1
    )


def mlvamp_run(y: np.ndarray, prior: PriorSpec, fe: FrontEndParams, n_iters: int):
    """Run the reference recursion; returns (xhats, final state).

    xhats[t] is the spectral estimate after t+1 completed rounds; with
    n_iters = 0 the estimate is the prior mean.
    """
    n = prior.layout.n
    state = VampState(z0=np.zeros(n, dtype=complex), gamma0=0.0)
    xhats = []
    for _ in range(n_iters):
        state = mlvamp_step(state, prior, fe, y)
        xhat, _ = spectral_denoise(state.z0, state.gamma0, prior)
        xhats.append(xhat)
    if not xhats:
        xhats.append(prior.mu.copy())
    return xhats, state
