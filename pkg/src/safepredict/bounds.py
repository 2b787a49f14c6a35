"""Closed-form excess-error bounds and a checker for finished runs.

Every evaluator returns the *excess* term, i.e. the amount by which the
realized rate ``L*/T*`` may exceed the target ``epsilon``.
"""

from dataclasses import dataclass
import enum
import math

import numpy as np

from .meta import Variant
from .trace import summarize

__all__ = [
    "BoundName",
    "BoundReport",
    "DOUBLING_FACTOR",
    "naive_bound",
    "fixed_rate_bound",
    "tuned_rate_bound",
    "doubling_bound",
    "log_inv_shift",
    "adaptive_bound",
    "adaptive_fixed_rate_bound",
    "adaptive_constant_bound",
    "ws_doubling_bound",
    "check_trace",
]

# 2*sqrt(2)/(sqrt(2)-1): price of not knowing V* in advance
DOUBLING_FACTOR = 2.0 * math.sqrt(2.0) / (math.sqrt(2.0) - 1.0)


class BoundName(str, enum.Enum):
    NAIVE = "naive"
    FIXED_RATE = "fixed_rate"
    TUNED_RATE = "tuned_rate"
    DOUBLING = "doubling"
    ADAPTIVE = "adaptive"
    ADAPTIVE_CONSTANT = "adaptive_constant"
    WS_DOUBLING = "ws_doubling"


def _log_inv(w_d1):
    if not 0 < w_d1 <= 1:
        raise ValueError(f"w_d1 must lie in (0, 1], got {w_d1}")
    return -math.log(w_d1)


def _pos(t_star):
    if not t_star > 0:
        raise ValueError("T* must be positive")


def naive_bound(w_d1, horizon, t_star):
    """Two-expert EWAF regret divided by ``T*``; vacuous when ``T* << sqrt(T)``."""
    _pos(t_star)
    return math.sqrt(horizon * _log_inv(w_d1) / 2.0) / t_star


def fixed_rate_bound(w_d1, epsilon, eta, v_star, t_star):
    """Excess for the plain variant run at a fixed rate ``eta``."""
    _pos(t_star)
    if not eta > 0:
        raise ValueError("eta must be positive")
    return _log_inv(w_d1) / (eta * t_star) + (1.0 - epsilon) ** 2 * eta * v_star / t_star


def tuned_rate_bound(w_d1, epsilon, v_star, t_star):
    """:func:`fixed_rate_bound` evaluated at the rate that minimizes it."""
    _pos(t_star)
    return 2.0 * (1.0 - epsilon) * math.sqrt(_log_inv(w_d1) * v_star) / t_star


def doubling_bound(w_d1, epsilon, v_star, t_star):
    _pos(t_star)
    return (1.0 - epsilon) * DOUBLING_FACTOR * math.sqrt(_log_inv(w_d1) * v_star) / t_star


def log_inv_shift(alphas):
    """``-log prod(1 - alpha_t)``; infinite if any ``alpha_t == 1``."""
    a = np.asarray(alphas, dtype=float)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError("alpha entries must lie in [0, 1]")
    if np.any(a == 1):
        return math.inf
    return float(-np.log1p(-a).sum())


def adaptive_bound(w_d1, epsilon, alphas, v_star, t_star):
    """Excess for the adaptive variant at its tuned rate.

    ``alphas`` are the floors ``alpha_1 .. alpha_{T-1}``.
    """
    _pos(t_star)
    return 2.0 * (1.0 - epsilon) * math.sqrt((_log_inv(w_d1) + log_inv_shift(alphas)) * v_star) / t_star


def adaptive_fixed_rate_bound(w_d1, epsilon, eta, alphas, v_star, t_star):
    """Excess for the adaptive variant at a fixed rate ``eta``."""
    _pos(t_star)
    if not eta > 0:
        raise ValueError("eta must be positive")
    log_term = _log_inv(w_d1) + log_inv_shift(alphas)
    return log_term / (eta * t_star) + (1.0 - epsilon) ** 2 * eta * v_star / t_star


def adaptive_constant_bound(w_d1, epsilon, alpha, horizon, v_star, t_star):
    """Tuned-rate adaptive excess with the ``T*alpha + T*alpha**2`` relaxation."""
    _pos(t_star)
    if not 0 <= alpha < 0.5:
        raise ValueError("relaxation needs 0 <= alpha < 1/2")
    log_term = _log_inv(w_d1) + horizon * alpha + horizon * alpha ** 2
    return 2.0 * (1.0 - epsilon) * math.sqrt(log_term * v_star) / t_star


def ws_doubling_bound(w_d1, epsilon, alpha, horizon, v_star, t_star):
    """Excess for weight shifting with doubling; equals :func:`doubling_bound` at ``alpha=0``."""
    _pos(t_star)
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    log_term = _log_inv(w_d1) + horizon * alpha + horizon * alpha ** 2
    return (1.0 - epsilon) * DOUBLING_FACTOR * math.sqrt(v_star) * math.sqrt(log_term) / t_star


@dataclass(frozen=True)
class BoundReport:
    bound_name: BoundName
    rhs_value: float
    realized_error_rate: float
    epsilon: float
    satisfied: bool
    T_star: float
    V_star: float
    guaranteed: bool = True

    @property
    def slack(self):
        return self.rhs_value + self.epsilon - self.realized_error_rate

    @property
    def vacuous(self):
        """The bound allows any error rate (or nothing was predicted)."""
        return not self.T_star > 0 or self.rhs_value + self.epsilon >= 1.0

    def as_dict(self):
        return {
            "bound": self.bound_name.value,
            "rhs": repr(float(self.rhs_value)),
            "realized_error_rate": repr(float(self.realized_error_rate)),
            "epsilon": repr(float(self.epsilon)),
            "slack": repr(float(self.slack)),
            "satisfied": str(self.satisfied).lower(),
            "vacuous": str(self.vacuous).lower(),
            "guaranteed": str(self.guaranteed).lower(),
        }


_BY_VARIANT = {
    Variant.PLAIN: BoundName.FIXED_RATE,
    Variant.DOUBLING: BoundName.DOUBLING,
    Variant.ADAPTIVE: BoundName.ADAPTIVE,
    Variant.WS_DOUBLING: BoundName.WS_DOUBLING,
}


def check_trace(trace, config):
    """Compare a finished run against the bound matching ``config.variant``.

    An empty run, or one that never predicts, yields a vacuous report.
    """
    s = summarize(trace)
    name = _BY_VARIANT[config.variant]
    eps, w_d1 = config.epsilon, config.w_d1
    if not s.T_star > 0:
        return BoundReport(name, math.inf, math.nan, eps, True, s.T_star, s.V_star,
                           config.bounds_guaranteed)
    v = config.variant
    if v is Variant.PLAIN:
        rhs = fixed_rate_bound(w_d1, eps, config.eta, s.V_star, s.T_star)
    elif v is Variant.DOUBLING:
        rhs = doubling_bound(w_d1, eps, s.V_star, s.T_star)
    elif v is Variant.ADAPTIVE:
        alphas = config.alphas(0, max(s.T - 1, 0))
        rhs = adaptive_fixed_rate_bound(w_d1, eps, config.eta, alphas, s.V_star, s.T_star)
    else:
        rhs = ws_doubling_bound(w_d1, eps, config.alpha, int(config.horizon), s.V_star, s.T_star)
    realized = s.error_rate
    return BoundReport(name, rhs, realized, eps, bool(realized <= eps + rhs),
                       s.T_star, s.V_star, config.bounds_guaranteed)
