"""Unrolled learned inference and its end-to-end training loop.

Inference runs T rounds alternating the per-sample coefficient network in the
time domain with closed-form Wiener shrinkage in the frequency domain, then
masks the result to the desired band. Training minimizes a weighted
per-iteration reconstruction loss over a simulated dataset with Adam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .frontend import FrontEndParams, apply_frontend, quantize, quantizer_for_scenario
from .neural import MlpWeights, UnrolledModel, f0_apply, f1_combine, f1_raw, new_model
from .spectrum import BandLayout, PriorSpec, prior_from_scenario, sample_signal, trial_rng

GAMMA_MIN, GAMMA_MAX = 1e-8, 1e8
GRAD_CLIP_NORM = 10.0


class InferenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    t_max: int = 2
    eta: float = 0.75
    n_samples: int = 1000
    n_epochs: int = 2000
    batch_size: int = 100
    lr0: float = 1e-3
    lr_decay: float = 0.9988
    fix_beta: bool = False
    share_weights: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (0.5 < self.eta <= 1.0):
            raise ValueError("eta must lie in (0.5, 1]")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")


@dataclass
class Dataset:
    """Simulated trials sharing one scenario; arrays are stacked over trials."""

    layout: BandLayout
    fe: FrontEndParams
    mu: np.ndarray  # (n, N) complex, estimator-side prior mean per trial
    S: np.ndarray  # (n, N) prior variances
    y: np.ndarray  # (n, N) observations (already quantized if applicable)
    x0: np.ndarray  # (n, N) true desired spectrum, zero off B0
    snr_db: float = 0.0
    inr_db: float = 0.0
    quantized: bool = False
    interferer_known: bool = False

    def __len__(self) -> int:
        return self.mu.shape[0]

    def entry(self, i: int):
        prior = PriorSpec(self.layout, self.mu[i], self.S[i])
        return prior, self.y[i], self.x0[i]


def make_dataset(
    layout: BandLayout,
    fe: FrontEndParams,
    snr_db: float,
    inr_db: float,
    interferer_known: bool,
    n_samples: int,
    seed: int,
    quantizer_bits: int | None = None,
    quantizer_backoff_db: float = 12.0,
) -> Dataset:
    """Draw n_samples independent trials of one scenario.

    The known-interferer realization is redrawn per trial (each trial is an
    independent observation period). Returns the front-end actually applied,
    including the scenario-sized quantizer when quantizer_bits is set.
    """
    n = layout.n
    rng0 = trial_rng(seed, 0)
    ref_prior = prior_from_scenario(layout, snr_db, inr_db, fe.sigma_a2, False, rng0)
    if quantizer_bits is not None:
        q = quantizer_for_scenario(ref_prior, fe, quantizer_bits, quantizer_backoff_db)
        fe = FrontEndParams(fe.p_sat, fe.sigma_a2, fe.sigma_b2, quantizer=q)
    mu = np.zeros((n_samples, n), dtype=complex)
    S = np.zeros((n_samples, n))
    y = np.zeros((n_samples, n), dtype=complex)
    x0 = np.zeros((n_samples, n), dtype=complex)
    mask0 = layout.band_mask(0)
    for i in range(n_samples):
        rng = trial_rng(seed, i)
        kprior = prior_from_scenario(layout, snr_db, inr_db, fe.sigma_a2, True, rng)
        sig = sample_signal(kprior, rng)
        yi, _, _ = apply_frontend(sig.r, fe, rng)
        if fe.quantizer is not None:
            yi = quantize(yi, fe.quantizer)
        est_prior = kprior if interferer_known else ref_prior
        mu[i], S[i] = est_prior.mu, est_prior.S
        y[i] = yi
        x0[i] = sig.x * mask0
    return Dataset(
        layout=layout,
        fe=fe,
        mu=mu,
        S=S,
        y=y,
        x0=x0,
        snr_db=snr_db,
        inr_db=inr_db,
        quantized=quantizer_bits is not None,
        interferer_known=interferer_known,
    )


def _check_finite(var, t: int, stage: str):
    if not np.all(np.isfinite(ag._value(var))):
        raise InferenceError(f"non-finite state at iteration {t}, stage '{stage}'")


def _clamp_gamma(gamma, counter: list):
    value = ag._value(gamma)
    counter[0] += int(np.sum((value < GAMMA_MIN) | (value > GAMMA_MAX)))
    return ag.clamp(gamma, GAMMA_MIN, GAMMA_MAX)


def unroll(y, mu, S, model: UnrolledModel, f1_weights, f0_weights, f1_fns=None, f0_fns=None):
    """Run the T-iteration unrolled recursion on (batched) arrays of shape (B, N).

    f1_weights/f0_weights are per-iteration weight holders (arrays or autodiff
    leaves). f1_fns/f0_fns optionally replace the networks with forced
    coefficient callables. Returns (trajectory, clamp_count); trajectory holds
    the unmasked spectral estimate of every iteration.
    """
    batch = y.shape[0]
    p_sat = model.p_sat
    clamp_count = [0]
    z1 = ag.ifft_u(ag.Var(mu))
    gamma1 = ag.Var(1.0 / np.mean(S, axis=-1, keepdims=True))
    trajectory = []
    for t in range(model.t_max):
        if f1_fns is not None:
            k0, k1, lv = f1_fns[t](z1, gamma1, y, p_sat)
        else:
            k0, k1, lv = f1_raw(z1, gamma1, y, p_sat, f1_weights[t])
        v, rho1 = f1_combine(z1, gamma1, y, k0, k1, lv)
        _check_finite(v, t, "f1 output v")
        _check_finite(rho1, t, "f1 output rho1")
        z0 = ag.fft_u(v)
        gamma0 = _clamp_gamma(ag.vmean(rho1, axis=-1, keepdims=True), clamp_count)
        gain = ag.div(ag.mul(gamma0, S), ag.add(1.0, ag.mul(gamma0, S)))
        xhat = ag.add(mu, ag.mul(gain, ag.sub(z0, mu)))
        _check_finite(xhat, t, "spectral estimate")
        trajectory.append(xhat)
        if t == model.t_max - 1:
            break
        gamma1 = _clamp_gamma(ag.div(gamma0, ag.vmean(gain, axis=-1, keepdims=True)), clamp_count)
        if model.fix_beta:
            z1 = ag.ifft_u(xhat)
        else:
            if f0_fns is not None:
                b0, b1 = f0_fns[t](z0, gamma0, S, mu, p_sat)
            else:
                rho0 = f0_apply(z0, gamma0, S, mu, p_sat, f0_weights[t])
                beta = ag.vmean(rho0, axis=1)
                b0 = ag.reshape(ag.select_last(beta, 0), (batch, 1))
                b1 = ag.reshape(ag.select_last(beta, 1), (batch, 1))
            z1 = ag.sub(ag.mul(b0, ag.ifft_u(xhat)), ag.mul(b1, ag.ifft_u(z0)))
        _check_finite(z1, t, "message z1")
    return trajectory, clamp_count[0]


def infer(y: np.ndarray, prior: PriorSpec, model: UnrolledModel, f1_fns=None, f0_fns=None):
    """Algorithm inference on a single trial; returns (xhat0, trajectory).

    xhat0 is the final spectral estimate masked to the desired band; the
    trajectory holds the unmasked per-iteration estimates.
    """
    n = prior.layout.n
    if y.shape != (n,):
        raise ValueError(f"expected y of shape ({n},)")
    traj, _ = unroll(
        y.reshape(1, n),
        prior.mu.reshape(1, n),
        prior.S.reshape(1, n),
        model,
        model.f1_weights,
        model.f0_weights,
        f1_fns=f1_fns,
        f0_fns=f0_fns,
    )
    trajectory = [ag._value(x).reshape(n) for x in traj]
    xhat0 = trajectory[-1] * prior.layout.band_mask(0)
    return xhat0, trajectory


def loss_weights(t_max: int) -> np.ndarray:
    """Early-loss weights w_t = t / sum_{i=1}^{T-1} i for t = 1..T-1."""
    if t_max < 2:
        return np.zeros(0)
    idx = np.arange(1, t_max)
    return idx / idx.sum()


def loss_total(trajectory, x0_true, band_mask, eta: float):
    """eta * final reconstruction error + (1-eta) * weighted early errors.

    Errors are squared norms over the desired band, averaged over the batch.
    """
    batch = ag._value(trajectory[0]).shape[0]
    weights = loss_weights(len(trajectory))

    def band_err(xhat):
        return ag.sumabs2(ag.mul(band_mask, ag.sub(x0_true, xhat)))

    loss = ag.mul(band_err(trajectory[-1]), eta / batch)
    for w_t, xhat in zip(weights, trajectory[:-1]):
        loss = ag.add(loss, ag.mul(band_err(xhat), (1.0 - eta) * w_t / batch))
    return loss


class Adam:
    """Plain Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: list, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list, lr: float):
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _unique_weights(model: UnrolledModel) -> list[MlpWeights]:
    seen: dict[int, MlpWeights] = {}
    lists = model.f1_weights if model.fix_beta else model.f1_weights + model.f0_weights
    for w in lists:
        seen.setdefault(id(w), w)
    return list(seen.values())


def _clip_grads(grads: list) -> list:
    norm = np.sqrt(sum(float(np.sum(g**2)) for g in grads))
    if norm > GRAD_CLIP_NORM:
        scale = GRAD_CLIP_NORM / norm
        grads = [g * scale for g in grads]
    return grads


def train(dataset: Dataset, cfg: TrainConfig, log_every: int = 1):
    """End-to-end Adam training; returns (model, per-epoch log rows).

    Deterministic given cfg.seed: initialization, batch order, and the
    optimizer trajectory are all driven by seeded generators.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng([cfg.seed, 0])
    model = new_model(cfg.t_max, dataset.fe.p_sat, rng, fix_beta=cfg.fix_beta, share_weights=cfg.share_weights)
    weights = _unique_weights(model)
    params = [arr for w in weights for arr in w.arrays()]
    opt = Adam(params)
    mask = dataset.layout.band_mask(0)
    order_rng = np.random.default_rng([cfg.seed, 1])
    log = []
    n = len(dataset)
    for epoch in range(cfg.n_epochs):
        lr = cfg.lr0 * cfg.lr_decay**epoch
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        epoch_clamps = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            tape = ag.Tape()
            var_map = {id(w): w.as_vars(tape) for w in weights}
            f1v = [var_map[id(w)] for w in model.f1_weights]
            f0v = [var_map.get(id(w)) for w in model.f0_weights]
            traj, clamps = unroll(
                dataset.y[idx], dataset.mu[idx], dataset.S[idx], model, f1v, f0v
            )
            loss = loss_total(traj, dataset.x0[idx], mask, cfg.eta)
            loss_val = float(loss.value)
            if not np.isfinite(loss_val):
                raise RuntimeError(f"non-finite loss at epoch {epoch}, batch {lo // cfg.batch_size}")
            ag.backward(tape, loss)
            leaf_vars = [getattr(var_map[id(w)], name) for w in weights for name in ("w1", "b1", "w2", "b2")]
            grads = [lv.grad if lv.grad is not None else np.zeros_like(lv.value) for lv in leaf_vars]
            grads = _clip_grads(grads)
            tape.release()
            opt.step(grads, lr)
            epoch_loss += loss_val * len(idx)
            epoch_clamps += clamps
        if epoch % log_every == 0 or epoch == cfg.n_epochs - 1:
            log.append(
                {"epoch": epoch, "mean_loss": epoch_loss / n, "lr": lr, "clamp_count": epoch_clamps}
            )
    return model, log
