"""Exponentially weighted average forecasting over a fixed set of experts.

Weights are stored as log-weights so that long runs of large losses never
underflow a live expert to exactly zero. Experts whose initial weight is
zero carry ``-inf`` and stay at zero.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "ExpertEnsemble",
    "VirtualEnsemble",
    "ewaf_update",
    "expected_loss",
    "mix_loss",
    "mixability_gap",
    "mix_loss_regret_bound",
    "ewaf_regret_bound",
    "build_virtual_ensemble",
    "virtual_marginals",
    "MAX_VIRTUAL_HORIZON",
]

MAX_VIRTUAL_HORIZON = 20
_SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class ExpertEnsemble:
    """Weights over ``N`` experts plus a learning rate.

    Build from probabilities with :meth:`from_weights`; the canonical
    representation is ``log_weights``.
    """

    log_weights: np.ndarray
    learning_rate: float

    def __post_init__(self):
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.ndim != 1 or lw.size == 0:
            raise ValueError("log_weights must be a non-empty vector")
        if not self.learning_rate > 0 or not math.isfinite(self.learning_rate):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValueError("log_weights must be finite or -inf")
        total = logsumexp(lw)
        if not abs(math.expm1(total)) <= _SIMPLEX_TOL:
            raise ValueError(f"weights must sum to 1, got exp({total})")
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_weights(cls, weights, learning_rate):
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or np.any(w > 1) or np.any(np.isnan(w)):
            raise ValueError("weights must lie in [0, 1]")
        with np.errstate(divide="ignore"):
            return cls(np.log(w), float(learning_rate))

    @classmethod
    def uniform(cls, n, learning_rate):
        return cls(np.full(n, -math.log(n)), float(learning_rate))

    @property
    def expert_count(self):
        return self.log_weights.size

    @property
    def weights(self):
        w = np.exp(self.log_weights)
        return w / w.sum()


def _check_losses(ensemble, losses):
    l = np.asarray(losses, dtype=float)
    if l.shape != (ensemble.expert_count,):
        raise ValueError(
            f"expected {ensemble.expert_count} losses, got shape {l.shape}"
        )
    if not np.all(np.isfinite(l)):
        raise ValueError("losses must be finite")
    if np.any(l < 0) or np.any(l > 1):
        raise ValueError("losses must lie in [0, 1]")
    return l


def ewaf_update(ensemble, losses):
    """Multiply each weight by ``exp(-eta * loss)`` and renormalize."""
    l = _check_losses(ensemble, losses)
    lw = ensemble.log_weights - ensemble.learning_rate * l
    lw = lw - logsumexp(lw)
    return ExpertEnsemble(lw, ensemble.learning_rate)


def expected_loss(ensemble, losses):
    l = _check_losses(ensemble, losses)
    return float(np.dot(ensemble.weights, l))


def mix_loss(ensemble, losses):
    """``-(1/eta) log sum_i w_i exp(-eta l_i)``, never above the expected loss."""
    l = _check_losses(ensemble, losses)
    eta = ensemble.learning_rate
    return float(-logsumexp(ensemble.log_weights - eta * l) / eta)


def mixability_gap(ensemble, losses):
    return expected_loss(ensemble, losses) - mix_loss(ensemble, losses)


def mix_loss_regret_bound(initial_weight, learning_rate):
    """Additive term ``-log(w_i1)/eta`` bounding cumulative mix-loss against expert i."""
    if not 0 < initial_weight <= 1:
        raise ValueError(f"initial weight must be in (0, 1], got {initial_weight}")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    return -math.log(initial_weight) / learning_rate


def ewaf_regret_bound(n_experts, horizon):
    """Regret of uniform-prior EWAF at its tuned rate: ``sqrt(T log N / 2)``."""
    if n_experts < 1 or horizon < 1:
        raise ValueError("need n_experts >= 1 and horizon >= 1")
    return math.sqrt(horizon * math.log(n_experts) / 2)


@dataclass(frozen=True)
class VirtualEnsemble:
    """``2**T`` experts, each following refuse/predict along its bit pattern.

    ``bits[i, t]`` is 1 when expert ``i`` follows the base predictor at step
    ``t + 1``; ``losses[t]`` holds every expert's loss at that step.
    """

    ensemble: ExpertEnsemble
    bits: np.ndarray
    losses: np.ndarray


def _schedule(values, needed, lo, hi, lo_open, hi_open, name):
    arr = np.broadcast_to(np.asarray(values, dtype=float), (needed,)) if np.ndim(values) == 0 \
        else np.asarray(values, dtype=float)
    if arr.shape[0] < needed:
        raise ValueError(f"{name} schedule needs at least {needed} entries")
    arr = arr[:needed]
    bad_lo = arr <= lo if lo_open else arr < lo
    bad_hi = arr >= hi if hi_open else arr > hi
    if np.any(bad_lo | bad_hi | np.isnan(arr)):
        raise ValueError(f"{name} schedule out of range")
    return arr


def build_virtual_ensemble(horizon, w_p1, epsilon, alphas, betas, base_losses):
    """Construct the expert ensemble whose EWAF marginals reproduce adaptive SafePredict.

    Expert ``i`` refuses at step ``t`` (loss ``epsilon``) when bit ``t-1`` of
    ``i`` is 0 and follows the base predictor (loss ``base_losses[t-1]``)
    otherwise. Initial weights are the Markov-chain path probabilities with
    start probability ``w_p1`` and per-step switch probabilities ``alphas``
    (refuse to predict) and ``1 - betas`` (predict to refuse).
    """
    T = int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if T > MAX_VIRTUAL_HORIZON:
        raise ValueError(f"horizon {T} too large for 2**T experts (max {MAX_VIRTUAL_HORIZON})")
    if not 0 < w_p1 < 1:
        raise ValueError("w_p1 must lie in (0, 1)")
    a = _schedule(alphas, T - 1, 0.0, 1.0, False, True, "alpha")
    b = _schedule(betas, T - 1, 0.0, 1.0, True, False, "beta")
    base = np.asarray(base_losses, dtype=float)
    if base.shape[0] < T:
        raise ValueError(f"need {T} base losses")
    base = base[:T]
    if np.any(base < 0) or np.any(base > 1):
        raise ValueError("base losses must lie in [0, 1]")

    idx = np.arange(2 ** T)
    bits = ((idx[:, None] >> np.arange(T)[None, :]) & 1).astype(np.int8)

    def term(mask, p):
        with np.errstate(divide="ignore"):
            return np.where(mask, np.log(p), 0.0)

    b1 = bits[:, 0] == 1
    log_w = np.where(b1, math.log(w_p1), math.log1p(-w_p1))
    for t in range(T - 1):
        cur = bits[:, t] == 1
        nxt = bits[:, t + 1] == 1
        log_w = log_w + term(~cur & nxt, a[t]) + term(~cur & ~nxt, 1.0 - a[t]) \
            + term(cur & nxt, b[t]) + term(cur & ~nxt, 1.0 - b[t])
    # path probabilities sum to one analytically; absorb rounding drift
    log_w = log_w - logsumexp(log_w)

    losses = np.where(bits.T == 1, base[:, None], float(epsilon))
    return VirtualEnsemble(ExpertEnsemble(log_w, 1.0), bits, losses)


def virtual_marginals(virtual, learning_rate):
    """Run EWAF on a virtual ensemble; return predicted mass before each step."""
    ens = ExpertEnsemble(virtual.ensemble.log_weights, learning_rate)
    T = virtual.bits.shape[1]
    out = np.empty(T)
    for t in range(T):
        w = ens.weights
        out[t] = w[virtual.bits[:, t] == 1].sum()
        ens = ewaf_update(ens, virtual.losses[t])
    return out
