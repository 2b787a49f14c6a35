"""Confidence-based refusal (CBR) and its stacking with SafePredict.

CBR predicts when a record's confidence exceeds a threshold recalibrated
every ``epoch_len`` steps by cross-validation on the history seen so far.
Stacked under SafePredict, a CBR refusal hides the step from SafePredict
entirely. The amnesic variant drops CBR history older than the last epoch
whenever SafePredict vetoes more than half of CBR's predictions in it.
"""

import csv
from dataclasses import dataclass, field
import math
import os

import numpy as np

from .meta import SafePredict
from .trace import RunTrace

__all__ = [
    "ScoredRecord",
    "CBRState",
    "StackStep",
    "StackResult",
    "cbr_decide",
    "calibrate_threshold",
    "brute_force_threshold",
    "combined_step",
    "amnesic_check",
    "DriftingScorer",
    "StaticScoredStream",
    "run_stack",
    "read_scored_csv",
    "write_scored_csv",
    "stack_trace",
]


@dataclass(frozen=True)
class ScoredRecord:
    confidence: float
    loss: float
    step: int

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError(f"loss must lie in [0, 1], got {self.loss}")


@dataclass
class CBRState:
    """Threshold plus the history it is calibrated on.

    History holds every record since ``window_start`` whether or not CBR
    predicted on it (labels are observed either way).
    """

    threshold: float = 0.0
    epoch_len: int = 100
    folds: int = 5
    confidences: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    window_start: int = 1
    calibrations: int = 0

    def record(self, rec):
        self.confidences.append(rec.confidence)
        self.losses.append(rec.loss)
        self.steps.append(rec.step)

    def forget_before(self, step):
        """Drop history older than ``step``."""
        keep = [i for i, s in enumerate(self.steps) if s >= step]
        self.confidences = [self.confidences[i] for i in keep]
        self.losses = [self.losses[i] for i in keep]
        self.steps = [self.steps[i] for i in keep]
        self.window_start = step

    def recalibrate(self, epsilon):
        if self.confidences:
            self.threshold = calibrate_threshold(
                self.confidences, self.losses, epsilon, self.folds)
            self.calibrations += 1
        return self.threshold


def cbr_decide(record, state):
    """Predict iff the confidence strictly exceeds the threshold."""
    return record.confidence > state.threshold


def _folds(n, folds):
    k = max(1, min(int(folds), n))
    return np.array_split(np.arange(n), k)


def calibrate_threshold(confidences, losses, epsilon, folds=5):
    """Smallest threshold whose cross-validated error on accepted points is <= epsilon.

    Candidates are 0 and every distinct confidence. History is split into
    ``folds`` contiguous folds; a candidate's score is the mean error rate
    over the folds in which it accepts at least one point. Candidates that
    accept nothing anywhere do not qualify, and 1 (refuse all) is returned
    when no candidate does.
    """
    conf = np.asarray(confidences, dtype=float)
    loss = np.asarray(losses, dtype=float)
    if conf.size == 0:
        raise ValueError("cannot calibrate on an empty history")
    if conf.shape != loss.shape:
        raise ValueError("confidences and losses differ in length")
    cands = np.union1d(conf, [0.0])
    rate_sum = np.zeros(cands.size)
    used = np.zeros(cands.size, dtype=np.int64)
    for idx in _folds(conf.size, folds):
        order = np.argsort(conf[idx], kind="stable")
        c_sorted = conf[idx][order]
        suffix = np.concatenate([np.cumsum(loss[idx][order][::-1])[::-1], [0.0]])
        first = np.searchsorted(c_sorted, cands, side="right")
        n_acc = c_sorted.size - first
        has = n_acc > 0
        rate_sum[has] += suffix[first[has]] / n_acc[has]
        used += has
    ok = used > 0
    mean = np.full(cands.size, np.inf)
    mean[ok] = rate_sum[ok] / used[ok]
    good = np.flatnonzero(mean <= epsilon)
    return float(cands[good[0]]) if good.size else 1.0


def brute_force_threshold(confidences, losses, epsilon, folds=5):
    """Reference scan for :func:`calibrate_threshold` with explicit loops."""
    conf = [float(c) for c in confidences]
    loss = [float(l) for l in losses]
    if not conf:
        raise ValueError("cannot calibrate on an empty history")
    k = max(1, min(int(folds), len(conf)))
    base, extra = divmod(len(conf), k)
    bounds, start = [], 0
    for j in range(k):
        size = base + (1 if j < extra else 0)
        bounds.append((start, start + size))
        start += size
    for cand in sorted(set(conf) | {0.0}):
        rates = []
        for lo, hi in bounds:
            acc = [loss[i] for i in range(lo, hi) if conf[i] > cand]
            if acc:
                rates.append(sum(acc) / len(acc))
        if rates and sum(rates) / len(rates) <= epsilon:
            return cand
    return 1.0


@dataclass(frozen=True)
class StackStep:
    step: int
    cbr_predict: bool
    sp_probability: float  # nan when SafePredict was not consulted
    sp_predict: bool

    @property
    def predict(self):
        return self.cbr_predict and self.sp_predict


def combined_step(record, cbr_state, sp):
    """One step of CBR under SafePredict.

    When CBR refuses, ``sp`` is left untouched: no draw, no update.
    ``sp`` may be None for standalone CBR.
    """
    if not cbr_decide(record, cbr_state):
        return StackStep(record.step, False, math.nan, False)
    if sp is None:
        return StackStep(record.step, True, 1.0, True)
    d = sp.decide()
    sp.observe_loss(record.loss)
    return StackStep(record.step, True, d.probability, d.predict)


def amnesic_check(epoch_steps):
    """True when SafePredict vetoed more than half of CBR's predictions."""
    cbr_pred = [s for s in epoch_steps if s.cbr_predict]
    if not cbr_pred:
        return False
    vetoed = sum(1 for s in cbr_pred if not s.sp_predict)
    return vetoed / len(cbr_pred) > 0.5


class DriftingScorer:
    """Synthetic scored stream from a base predictor that relearns after a change.

    Confidence is uniform on [0, 1]. A well-calibrated predictor errs with
    probability ``scale * (1 - c)**2``; right after the change the relation
    is inverted to ``scale * c**2``. The predictor is modelled as trained on
    its window ``[window_start, t)``: the calibrated relation holds with
    weight equal to the fraction of that window drawn from the current
    regime, so forgetting pre-change data speeds recovery.
    """

    def __init__(self, horizon, change_at=None, scale=0.5, seed=0):
        self.horizon = int(horizon)
        self.change_at = int(change_at) if change_at is not None else self.horizon // 2
        self.scale = float(scale)
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.horizon

    def purity(self, t, window_start):
        if t <= self.change_at:
            return 1.0
        lo = max(int(window_start), 1)
        seen = t - lo
        if seen <= 0:
            return 0.0
        return (t - max(lo, self.change_at + 1)) / seen

    def error_prob(self, confidence, t, window_start):
        pi = self.purity(t, window_start)
        return self.scale * (pi * (1.0 - confidence) ** 2 + (1.0 - pi) * confidence ** 2)

    def draw(self, t, window_start=1):
        c, u = self.rng.random(2)
        loss = 1.0 if u < self.error_prob(c, t, window_start) else 0.0
        return ScoredRecord(float(c), loss, t)


class StaticScoredStream:
    """Fixed records (e.g. from CSV); the training window has no effect."""

    def __init__(self, records):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def draw(self, t, window_start=1):
        return self.records[t - 1]


@dataclass(frozen=True)
class StackResult:
    confidence: np.ndarray
    loss: np.ndarray
    cbr: np.ndarray
    sp_probability: np.ndarray
    sp_decision: np.ndarray
    amnesia: np.ndarray
    sp_trace: RunTrace
    thresholds: np.ndarray

    @property
    def horizon(self):
        return self.loss.shape[0]

    def expected_predictions(self):
        """Per-step probability that the stack emits a prediction."""
        w = np.where(self.cbr == 1, self.sp_probability, 0.0)
        return np.nan_to_num(w, nan=0.0)

    def efficiency(self, start=1, stop=None):
        """Expected fraction of steps ``start..stop`` predicted."""
        w = self.expected_predictions()[start - 1:stop]
        return float(w.mean()) if w.size else math.nan

    def error_rate(self, start=1, stop=None):
        """Expected loss per expected prediction over steps ``start..stop``."""
        w = self.expected_predictions()[start - 1:stop]
        l = self.loss[start - 1:stop]
        tot = w.sum()
        return float((w * l).sum() / tot) if tot > 0 else math.nan


def run_stack(source, epsilon, sp_config=None, seed=0, amnesic=False,
              epoch_len=100, folds=5):
    """Drive CBR (optionally under SafePredict) over ``source``.

    ``source`` provides ``draw(t, window_start)`` and ``len``. The threshold
    is recalibrated at the start of steps ``epoch_len + 1, 2*epoch_len + 1,
    ...`` on the history up to the previous step.
    """
    if amnesic and sp_config is None:
        raise ValueError("amnesia needs SafePredict's refusals as its trigger")
    n = len(source)
    cbr = CBRState(epoch_len=epoch_len, folds=folds)
    sp = SafePredict(sp_config, seed=seed) if sp_config is not None else None

    conf = np.empty(n)
    loss = np.empty(n)
    cbr_bits = np.zeros(n, dtype=np.int8)
    sp_w = np.full(n, math.nan)
    sp_dec = np.zeros(n, dtype=np.int8)
    amn = np.zeros(n, dtype=np.int8)
    thresholds = np.empty(n)
    sp_rows = []
    epoch_steps = []

    for t in range(1, n + 1):
        if t > 1 and (t - 1) % epoch_len == 0:
            if amnesic and amnesic_check(epoch_steps):
                cbr.forget_before(t - epoch_len)
                amn[t - 2] = 1
            epoch_steps = []
            cbr.recalibrate(epsilon)
        rec = source.draw(t, cbr.window_start)
        thresholds[t - 1] = cbr.threshold
        if sp is not None:
            state = sp.state
            eta, epoch, sp_t = state.eta, state.epoch, state.t
        st = combined_step(rec, cbr, sp)
        cbr.record(rec)
        epoch_steps.append(st)

        conf[t - 1] = rec.confidence
        loss[t - 1] = rec.loss
        cbr_bits[t - 1] = st.cbr_predict
        sp_dec[t - 1] = st.predict
        if st.cbr_predict:
            sp_w[t - 1] = st.sp_probability
            if sp is not None:
                sp_rows.append((sp_t, st.sp_probability, rec.loss, int(st.sp_predict), eta, epoch, t))

    if sp_rows:
        cols = list(zip(*sp_rows))
        resets = tuple(sp.state.reset_times)
        sp_trace = RunTrace(t=cols[0], w_p=cols[1], loss=cols[2], decision=cols[3],
                            eta=cols[4], epoch=cols[5], reset_times=resets)
    else:
        sp_trace = RunTrace.empty()
    return StackResult(conf, loss, cbr_bits, sp_w, sp_dec, amn, sp_trace, thresholds)


def stack_trace(result):
    """Full-stream trace of a stack run with CBR and amnesia columns.

    Steps CBR refused carry probability 0 and ``eta`` NaN.
    """
    n = result.horizon
    w = result.expected_predictions()
    return RunTrace(
        t=np.arange(1, n + 1), w_p=w, loss=result.loss, decision=result.sp_decision,
        eta=np.full(n, math.nan), epoch=np.zeros(n, dtype=np.int64),
        cbr=result.cbr, amnesia=result.amnesia,
    )


def write_scored_csv(records, dest):
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            return write_scored_csv(records, fh)
    dest.write("step,confidence,loss\n")
    for r in records:
        dest.write(f"{r.step},{r.confidence!r},{r.loss!r}\n")


def read_scored_csv(source):
    """Read ``step,confidence,loss`` rows; errors name the offending line."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_scored_csv(fh)
    reader = csv.DictReader(source)
    need = {"step", "confidence", "loss"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValueError("line 1: scored file needs columns step,confidence,loss")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            out.append(ScoredRecord(float(row["confidence"]), float(row["loss"]), int(row["step"])))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out
