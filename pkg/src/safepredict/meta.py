"""SafePredict: randomized predict/refuse decisions over a base predictor's losses.

Four variants share one update path:

``plain``
    EWAF on the two-expert ensemble {refuse, predict} with a fixed rate.
``doubling``
    ``plain`` restarted whenever the running variance proxy exceeds
    ``2**k``; the rate shrinks by ``sqrt(2)`` per epoch.
``adaptive``
    The updated probability is mapped affinely into ``[alpha_t, beta_t]``.
``ws_doubling``
    Weight shifting (``beta = 1``, constant ``alpha``) with doubling restarts.

The prediction probability is carried as log-odds so a long run of bad
losses cannot underflow it to zero.
"""

from dataclasses import dataclass, field
import enum
import math

import numpy as np

from . import _kernel_py
from ._backend import kernel as _kernel
from .trace import RunTrace

__all__ = [
    "Variant",
    "MetaConfig",
    "MetaState",
    "Decision",
    "SafePredict",
    "ProtocolError",
    "learning_rate_for_epoch",
    "optimal_fixed_rate",
    "prediction_prob_bounds",
    "ws_refusal_bound",
    "run_stream",
]


class Variant(str, enum.Enum):
    PLAIN = "plain"
    DOUBLING = "doubling"
    ADAPTIVE = "adaptive"
    WS_DOUBLING = "ws_doubling"

    @property
    def doubling(self):
        return self in (Variant.DOUBLING, Variant.WS_DOUBLING)


class ProtocolError(RuntimeError):
    """decide/observe_loss called out of order."""


def _as_schedule(value, name, lo_ok, hi_ok):
    if np.ndim(value) == 0:
        v = float(value)
        if not (lo_ok(v) and hi_ok(v)):
            raise ValueError(f"{name}={v} out of range")
        return v
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} schedule must be one-dimensional")
    if not all(lo_ok(x) and hi_ok(x) for x in arr):
        raise ValueError(f"{name} schedule has entries out of range")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MetaConfig:
    """Parameters of one SafePredict instance.

    ``alpha`` and ``beta`` are either constants or per-step schedules whose
    entry ``t - 1`` bounds the probability produced by the update after
    step ``t``. ``horizon`` is required by ``ws_doubling``.
    """

    epsilon: float
    w_init: float = 0.5
    variant: Variant = Variant.PLAIN
    eta: float = None
    alpha: object = 0.0
    beta: object = 1.0
    horizon: int = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.w_init < 1:
            raise ValueError(f"w_init must lie in (0, 1), got {self.w_init}")
        if self.eta is not None and not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.horizon is not None and int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        alpha = _as_schedule(self.alpha, "alpha", lambda a: a >= 0, lambda a: a < 1)
        beta = _as_schedule(self.beta, "beta", lambda b: b > 0, lambda b: b <= 1)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

        v = self.variant
        if v in (Variant.PLAIN, Variant.ADAPTIVE) and self.eta is None:
            raise ValueError(f"variant {v.value} needs an explicit eta")
        if v in (Variant.PLAIN, Variant.DOUBLING):
            if not (np.ndim(alpha) == 0 and alpha == 0.0 and np.ndim(beta) == 0 and beta == 1.0):
                raise ValueError(f"variant {v.value} does not take alpha/beta")
        if v is Variant.WS_DOUBLING:
            if np.ndim(alpha) != 0:
                raise ValueError("ws_doubling takes a constant alpha")
            if not (np.ndim(beta) == 0 and beta == 1.0):
                raise ValueError("ws_doubling fixes beta = 1")
            if self.horizon is None:
                raise ValueError("ws_doubling needs the horizon for its learning rate")
        if v is Variant.ADAPTIVE and np.ndim(alpha) == 0 and np.ndim(beta) == 0 and alpha > beta:
            raise ValueError("alpha must not exceed beta")

    @property
    def bounds_guaranteed(self):
        """Validity bounds are stated for ``epsilon < 1/2`` only."""
        return self.epsilon < 0.5

    @property
    def w_d1(self):
        return 1.0 - self.w_init

    @property
    def log_inv_wd(self):
        """``-log`` of the effective initial refusal weight used by the doubling rate."""
        if self.variant is Variant.WS_DOUBLING:
            return -(math.log(self.w_d1) + (int(self.horizon) - 1) * math.log1p(-self.alpha))
        return -math.log(self.w_d1)

    def _sched(self, value, start, n, name):
        if np.ndim(value) == 0:
            return np.full(n, float(value))
        if start + n > value.shape[0]:
            raise ValueError(f"{name} schedule exhausted at step {value.shape[0] + 1}")
        return np.ascontiguousarray(value[start:start + n])

    def alphas(self, start, n):
        """Floors applied after steps ``start+1 .. start+n``."""
        return self._sched(self.alpha, start, n, "alpha")

    def betas(self, start, n):
        return self._sched(self.beta, start, n, "beta")


@dataclass
class MetaState:
    """Evolving state of one instance.

    Cumulative statistics accrue the probability that governed each step's
    decision; ``v_sum`` accrues post-update weights for the doubling test.
    """

    t: int
    w_p: float
    w_d: float
    log_odds: float
    eta: float
    epoch: int = 1
    v_sum: float = 0.0
    cum_lstar: float = 0.0
    cum_tstar: float = 0.0
    cum_vstar: float = 0.0
    cum_lbase: float = 0.0
    reset_times: list = field(default_factory=list)

    def _pack(self):
        return (self.log_odds, self.w_p, self.w_d, self.eta, self.epoch, self.v_sum,
                self.cum_lstar, self.cum_tstar, self.cum_vstar, self.cum_lbase)

    def _unpack(self, s):
        (self.log_odds, self.w_p, self.w_d, self.eta, epoch, self.v_sum,
         self.cum_lstar, self.cum_tstar, self.cum_vstar, self.cum_lbase) = s
        self.epoch = int(epoch)


@dataclass(frozen=True)
class Decision:
    predict: bool
    probability: float
    step: int


def learning_rate_for_epoch(config, epoch):
    """Rate used during doubling epoch ``epoch`` (first epoch is 1)."""
    if not config.variant.doubling:
        raise ValueError(f"variant {config.variant.value} has no doubling schedule")
    if epoch < 1:
        raise ValueError("epochs start at 1")
    return _kernel_py.epoch_rate(config.log_inv_wd, config.epsilon, int(epoch))


def optimal_fixed_rate(w_d1, epsilon, v_star):
    """Rate minimizing the fixed-rate validity bound for a known ``V*``."""
    if not v_star > 0:
        raise ValueError(f"V* must be positive, got {v_star}")
    if not 0 < w_d1 < 1:
        raise ValueError("w_d1 must lie in (0, 1)")
    return math.sqrt(math.log(1.0 / w_d1) / v_star) / (1.0 - epsilon)


def prediction_prob_bounds(w_p1, eta, epsilon, cum_loss, t):
    """Envelope for the plain variant's ``w_{P,t+1}`` after ``t`` steps.

    Accepts scalars or arrays; results are clipped to ``[0, 1]``.
    """
    w_d1 = 1.0 - w_p1
    gap = eta * (np.asarray(cum_loss, dtype=float) - epsilon * np.asarray(t, dtype=float))
    with np.errstate(over="ignore"):
        lower = 1.0 - (w_d1 / w_p1) * np.exp(gap)
        upper = (w_p1 / w_d1) * np.exp(-gap)
    lower, upper = np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def ws_refusal_bound(alpha, eta, epsilon, partial_loss, span):
    """Upper bound on the weight-shifting refusal probability.

    ``partial_loss`` is the base loss summed over the last ``span`` steps.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1); the bound is vacuous at 0")
    eps_shift = epsilon + alpha / eta
    expo = eta * (np.asarray(partial_loss, dtype=float) - eps_shift * np.asarray(span, dtype=float))
    with np.errstate(over="ignore"):
        out = (1.0 - alpha) / alpha * np.exp(expo)
    return float(out) if np.ndim(out) == 0 else out


def _check_losses(losses):
    arr = np.ascontiguousarray(losses, dtype=float)
    if arr.ndim != 1:
        raise ValueError("losses must be a vector")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        bad = np.flatnonzero(~((arr >= 0) & (arr <= 1)))
        raise ValueError(f"loss at step {bad[0] + 1} is outside [0, 1]: {arr[bad[0]]}")
    return arr


class SafePredict:
    """One SafePredict instance over one loss stream.

    Use :meth:`decide` then :meth:`observe_loss` once per step, or
    :meth:`run` to process a whole vector of losses. Both paths consume one
    uniform draw per step from the instance's generator and produce the
    same states.
    """

    def __init__(self, config, seed=None, rng=None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        w = config.w_init
        eta = learning_rate_for_epoch(config, 1) if config.variant.doubling else float(config.eta)
        self.state = MetaState(
            t=1, w_p=w, w_d=1.0 - w,
            log_odds=math.log(w) - math.log(1.0 - w), eta=eta,
        )
        self._pending = None
        self._log_inv_wd = float(config.log_inv_wd)

    def decide(self):
        if self._pending is not None:
            raise ProtocolError("decide called twice without observe_loss")
        u = self.rng.random()
        s = self.state
        self._pending = u
        return Decision(predict=bool(u < s.w_p), probability=s.w_p, step=s.t)

    def observe_loss(self, loss):
        if self._pending is None:
            raise ProtocolError("observe_loss called without a preceding decide")
        loss = float(loss)
        if not 0.0 <= loss <= 1.0:
            raise ValueError(f"loss must lie in [0, 1], got {loss}")
        cfg, s = self.config, self.state
        a = float(cfg.alpha) if np.ndim(cfg.alpha) == 0 else float(cfg.alphas(s.t - 1, 1)[0])
        b = float(cfg.beta) if np.ndim(cfg.beta) == 0 else float(cfg.betas(s.t - 1, 1)[0])
        new, _, reset = _kernel_py.step(
            s._pack(), loss, self._pending, a, b, float(cfg.epsilon), float(cfg.w_init),
            self._log_inv_wd, cfg.variant.doubling)
        s._unpack(new)
        if reset:
            s.reset_times.append(s.t)
        s.t += 1
        self._pending = None
        return s

    def run(self, losses):
        """Process ``losses`` in bulk and return their trace."""
        if self._pending is not None:
            raise ProtocolError("run called with an undecided step pending")
        arr = _check_losses(losses)
        uniforms = self.rng.random(arr.shape[0])
        return self._advance(arr, uniforms, _kernel)

    def _advance(self, losses, uniforms, kern):
        cfg, s = self.config, self.state
        n = losses.shape[0]
        start = s.t - 1
        new, w, eta, epoch, dec, reset = kern.simulate(
            losses, uniforms, cfg.alphas(start, n), cfg.betas(start, n),
            float(cfg.epsilon), float(cfg.w_init), float(cfg.log_inv_wd),
            cfg.variant.doubling, s._pack(),
        )
        s._unpack(new)
        steps = np.arange(s.t, s.t + n, dtype=np.int64)
        resets = tuple(int(x) for x in steps[np.asarray(reset, dtype=bool)])
        s.reset_times.extend(resets)
        s.t += n
        return RunTrace(t=steps, w_p=w, loss=losses, decision=dec, eta=eta,
                        epoch=epoch, reset_times=resets)

    def prediction_bounds(self):
        """Envelope on the current probability; plain variant only."""
        if self.config.variant is not Variant.PLAIN:
            raise ValueError("prediction bounds hold for the plain variant only")
        cfg = self.config
        return prediction_prob_bounds(cfg.w_init, cfg.eta, cfg.epsilon,
                                      self.state.cum_lbase, self.state.t - 1)


def run_stream(config, losses, seed=None):
    """Fresh instance over a whole loss vector."""
    return SafePredict(config, seed=seed).run(losses)
