"""Per-sample coefficient networks and their serialization.

Two compact MLPs (one hidden layer of 64 sigmoid units, linear output) drive
the unrolled algorithm. f1 maps magnitude features of (z1, gamma1, y) to the
raw outputs (kappa0, kappa1, log_xvar); f0 maps features of (z0, gamma0, S,
mu) to the per-sample message-coefficient pair rho0. All features are
normalized by the saturation level so the networks are scale-free.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import autograd as ag

HIDDEN = 64
F1_D_IN, F1_D_OUT = 3, 3
F0_D_IN, F0_D_OUT = 4, 2

# guards the 1/(gamma*p_sat) feature at tiny precisions
GAMMA_FEATURE_MAX = 1e3

_MAGIC = b"LMLVAMP\x00"
_VERSION = 1


@dataclass
class MlpWeights:
    """Two-layer perceptron parameters: w1 (64 x d_in), w2 (d_out x 64)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def as_vars(self, tape: ag.Tape) -> SimpleNamespace:
        return SimpleNamespace(
            w1=tape.watch(self.w1), b1=tape.watch(self.b1), w2=tape.watch(self.w2), b2=tape.watch(self.b2)
        )


def init_mlp(d_in: int, d_out: int, rng: np.random.Generator, b2_init) -> MlpWeights:
    """Scaled-uniform hidden layer; zero output weights with a chosen output bias."""
    bound = np.sqrt(6.0 / (d_in + HIDDEN))
    return MlpWeights(
        w1=rng.uniform(-bound, bound, size=(HIDDEN, d_in)),
        b1=np.zeros(HIDDEN),
        w2=np.zeros((d_out, HIDDEN)),
        b2=np.asarray(b2_init, dtype=float).copy(),
    )


@dataclass
class UnrolledModel:
    """Per-iteration weight lists for the T-iteration unrolled algorithm."""

    f1_weights: list
    f0_weights: list
    p_sat: float
    t_max: int
    fix_beta: bool = False

    def __post_init__(self):
        if len(self.f1_weights) != self.t_max or len(self.f0_weights) != self.t_max:
            raise ValueError("weight lists must have length t_max")


def new_model(
    t_max: int,
    p_sat: float,
    rng: np.random.Generator,
    fix_beta: bool = False,
    share_weights: bool = False,
) -> UnrolledModel:
    """Fresh model initialized near the stable fixed-coefficient configuration.

    Output biases start at kappa0=0.5, kappa1=1, log_xvar=0 and (beta0, beta1)
    = (1, 0). With share_weights the same MlpWeights objects are reused across
    iterations.
    """
    if share_weights:
        f1 = [init_mlp(F1_D_IN, F1_D_OUT, rng, [0.5, 1.0, 0.0])] * t_max
        f0 = [init_mlp(F0_D_IN, F0_D_OUT, rng, [1.0, 0.0])] * t_max
    else:
        f1 = [init_mlp(F1_D_IN, F1_D_OUT, rng, [0.5, 1.0, 0.0]) for _ in range(t_max)]
        f0 = [init_mlp(F0_D_IN, F0_D_OUT, rng, [1.0, 0.0]) for _ in range(t_max)]
    return UnrolledModel(f1_weights=f1, f0_weights=f0, p_sat=p_sat, t_max=t_max, fix_beta=fix_beta)


def mlp_forward(w, features):
    """w2 @ sigmoid(w1 @ features + b1) + b2, vectorized over leading axes."""
    x = features if isinstance(features, ag.Var) else ag.Var(np.asarray(features, dtype=float))
    d_in = np.shape(ag._value(w.w1))[1]
    if x.value.shape[-1] != d_in:
        raise ValueError(f"expected {d_in} input features, got {x.value.shape[-1]}")
    lead = x.value.shape[:-1]
    x2 = ag.reshape(x, (-1, d_in))
    h = ag.sigmoid(ag.linear(x2, w.w1, w.b1))
    out = ag.linear(h, w.w2, w.b2)
    return ag.reshape(out, lead + (out.value.shape[-1],))


def _gamma_feature(gamma, p_sat, shape):
    g = ag.clamp(ag.div(1.0, ag.mul(gamma, p_sat)), 0.0, GAMMA_FEATURE_MAX)
    return ag.broadcast_to(g, shape)


def f1_raw(z1, gamma1, y, p_sat: float, w):
    """Raw network outputs (kappa0, kappa1, log_xvar) for each sample."""
    inv_sp = 1.0 / np.sqrt(p_sat)
    az = ag.mul(ag.cabs(z1), inv_sp)
    ay = ag.mul(ag.cabs(y), inv_sp)
    feats = ag.stack_last([az, _gamma_feature(gamma1, p_sat, az.value.shape), ay])
    out = mlp_forward(w, feats)
    return ag.select_last(out, 0), ag.select_last(out, 1), ag.select_last(out, 2)


def f1_combine(z1, gamma1, y, k0, k1, lv):
    """v = z1 + kappa0 (y - kappa1 z1), rho1 = gamma1 / exp(log_xvar)."""
    v = ag.add(z1, ag.mul(k0, ag.sub(y, ag.mul(k1, z1))))
    rho1 = ag.div(gamma1, ag.exp(lv))
    return v, rho1


def f1_apply(z1, gamma1, y, p_sat: float, w):
    """Per-sample time-domain update; returns (v, rho1) with rho1 > 0."""
    k0, k1, lv = f1_raw(z1, gamma1, y, p_sat, w)
    v, rho1 = f1_combine(z1, gamma1, y, k0, k1, lv)
    if not (np.all(np.isfinite(v.value)) and np.all(np.isfinite(rho1.value))):
        raise FloatingPointError("non-finite f1 output")
    return v, rho1


def f0_apply(z0, gamma0, S, mu, p_sat: float, w):
    """Per-sample message-coefficient pair rho0; averaging gives (beta0, beta1)."""
    inv_sp = 1.0 / np.sqrt(p_sat)
    az = ag.mul(ag.cabs(z0), inv_sp)
    am = ag.mul(ag.cabs(mu), inv_sp)
    sp = ag.mul(S, 1.0 / p_sat)
    feats = ag.stack_last([az, _gamma_feature(gamma0, p_sat, az.value.shape), sp, am])
    rho0 = mlp_forward(w, feats)
    if not np.all(np.isfinite(rho0.value)):
        raise FloatingPointError("non-finite f0 output")
    return rho0


def save_model(model: UnrolledModel, path):
    """Versioned binary dump; little-endian float64 arrays, bit-exact round trip."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        flags = 1 if model.fix_beta else 0
        fh.write(struct.pack("<IIId", _VERSION, flags, model.t_max, model.p_sat))
        for weights in list(model.f1_weights) + list(model.f0_weights):
            for arr in weights.arrays():
                arr = np.asarray(arr, dtype="<f8")
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())


def _read_array(fh) -> np.ndarray:
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()


def load_model(path) -> UnrolledModel:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a model file")
        version, flags, t_max, p_sat = struct.unpack("<IIId", fh.read(struct.calcsize("<IIId")))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        weights = []
        for _ in range(2 * t_max):
            weights.append(MlpWeights(*(_read_array(fh) for _ in range(4))))
    return UnrolledModel(
        f1_weights=weights[:t_max],
        f0_weights=weights[t_max:],
        p_sat=p_sat,
        t_max=t_max,
        fix_beta=bool(flags & 1),
    )
