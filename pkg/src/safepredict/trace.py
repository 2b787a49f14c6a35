"""Per-step run records, summary statistics and CSV serialization."""

import csv
from dataclasses import dataclass, field, fields
import io
import math
import os

import numpy as np

__all__ = [
    "RunTrace",
    "RunSummary",
    "TraceFormatError",
    "summarize",
    "concat",
    "write_csv",
    "read_csv",
    "format_summary",
    "parse_summary",
    "write_summary",
    "HEADER",
]

HEADER = ("t", "w_p", "loss", "decision", "eta", "epoch", "cbr", "amnesia")


class TraceFormatError(ValueError):
    """Raised for malformed trace files; message carries the line number."""


def _ro(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Column-oriented step records.

    ``w_p`` is the prediction probability in force when the step's decision
    was drawn. ``cbr`` and ``amnesia`` are only present for runs driven by
    the confidence-based stack.
    """

    t: np.ndarray
    w_p: np.ndarray
    loss: np.ndarray
    decision: np.ndarray
    eta: np.ndarray
    epoch: np.ndarray
    cbr: np.ndarray = None
    amnesia: np.ndarray = None
    reset_times: tuple = ()

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("t", _ro(self.t, np.int64))
        set_("w_p", _ro(self.w_p, float))
        set_("loss", _ro(self.loss, float))
        set_("decision", _ro(self.decision, np.int8))
        set_("eta", _ro(self.eta, float))
        set_("epoch", _ro(self.epoch, np.int64))
        n = self.t.shape[0]
        for name in ("cbr", "amnesia"):
            v = getattr(self, name)
            if v is not None:
                set_(name, _ro(v, np.int8))
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray) and v.shape != (n,):
                raise ValueError(f"column {f.name} has length {v.shape[0]}, expected {n}")
        set_("reset_times", tuple(int(x) for x in self.reset_times))
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("steps must be strictly increasing")
        if np.any((self.w_p < 0) | (self.w_p > 1)):
            raise ValueError("weights must lie in [0, 1]")
        if np.any((self.loss < 0) | (self.loss > 1)):
            raise ValueError("losses must lie in [0, 1]")

    def __len__(self):
        return self.t.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RunTrace):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if a is None or b is None:
                if a is not b:
                    return False
            elif isinstance(a, np.ndarray):
                if a.dtype != b.dtype or not np.array_equal(a, b, equal_nan=a.dtype.kind == "f"):
                    return False
            elif a != b:
                return False
        return True

    @classmethod
    def empty(cls):
        return cls(t=[], w_p=[], loss=[], decision=[], eta=[], epoch=[])

    def select(self, mask):
        """Subset of rows (e.g. a post-change window)."""
        opt = lambda v: None if v is None else v[mask]
        kept = set(self.t[mask].tolist())
        return RunTrace(
            self.t[mask], self.w_p[mask], self.loss[mask], self.decision[mask],
            self.eta[mask], self.epoch[mask], opt(self.cbr), opt(self.amnesia),
            tuple(r for r in self.reset_times if r in kept),
        )


@dataclass(frozen=True)
class RunSummary:
    T: int
    T_star: float
    V_star: float
    L_star: float
    error_rate: float
    efficiency: float
    predictions: int
    errors: float
    reset_times: tuple = field(default=())

    @property
    def vacuous(self):
        return not self.T_star > 0


def summarize(trace):
    """Expected and sampled counts of a finished run.

    ``error_rate`` is ``L*/T*`` and is NaN when nothing was ever predicted.
    """
    w = trace.w_p
    T = len(trace)
    t_star = float(w.sum())
    v_star = float((w * (1.0 - w)).sum())
    l_star = float((w * trace.loss).sum())
    dec = trace.decision.astype(bool)
    return RunSummary(
        T=T,
        T_star=t_star,
        V_star=v_star,
        L_star=l_star,
        error_rate=l_star / t_star if t_star > 0 else math.nan,
        efficiency=t_star / T if T else math.nan,
        predictions=int(dec.sum()),
        errors=float(trace.loss[dec].sum()),
        reset_times=trace.reset_times,
    )


def concat(traces):
    traces = list(traces)
    if not traces:
        return RunTrace.empty()

    def opt(name):
        cols = [getattr(tr, name) for tr in traces]
        if all(c is None for c in cols):
            return None
        if any(c is None for c in cols):
            raise ValueError(f"cannot concatenate traces with and without {name!r}")
        return np.concatenate(cols)

    return RunTrace(
        t=np.concatenate([tr.t for tr in traces]),
        w_p=np.concatenate([tr.w_p for tr in traces]),
        loss=np.concatenate([tr.loss for tr in traces]),
        decision=np.concatenate([tr.decision for tr in traces]),
        eta=np.concatenate([tr.eta for tr in traces]),
        epoch=np.concatenate([tr.epoch for tr in traces]),
        cbr=opt("cbr"),
        amnesia=opt("amnesia"),
        reset_times=sum((tr.reset_times for tr in traces), ()),
    )


def _fmt(x):
    # repr gives the shortest string that round-trips a double
    return repr(float(x))


def write_csv(trace, dest):
    """Write ``trace`` to a path or text stream. Reset times go in a trailing comment."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_csv(trace, fh)
        return
    lines = [",".join(HEADER)]
    cbr = trace.cbr.tolist() if trace.cbr is not None else None
    amn = trace.amnesia.tolist() if trace.amnesia is not None else None
    for i, (t, w, l, d, e, k) in enumerate(zip(
        trace.t.tolist(), trace.w_p.tolist(), trace.loss.tolist(),
        trace.decision.tolist(), trace.eta.tolist(), trace.epoch.tolist(),
    )):
        c = "" if cbr is None else str(cbr[i])
        a = "" if amn is None else str(amn[i])
        lines.append(f"{t},{w!r},{l!r},{d},{e!r},{k},{c},{a}")
    if trace.reset_times:
        lines.append("# resets=" + " ".join(str(r) for r in trace.reset_times))
    dest.write("\n".join(lines) + "\n")


def read_csv(source):
    """Parse a trace file written by :func:`write_csv`."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_csv(fh)
    text = source.read()
    rows = text.splitlines()
    if not rows or tuple(rows[0].strip().split(",")) != HEADER:
        raise TraceFormatError(f"line 1: expected header {','.join(HEADER)}")
    cols = {k: [] for k in HEADER}
    resets = ()
    reader = csv.reader(io.StringIO("\n".join(rows[1:])))
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if row[0].startswith("#"):
            body = row[0][1:].strip()
            if body.startswith("resets="):
                try:
                    resets = tuple(int(x) for x in body[len("resets="):].split())
                except ValueError:
                    raise TraceFormatError(f"line {lineno}: bad reset list") from None
            continue
        if len(row) != len(HEADER):
            raise TraceFormatError(f"line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
        try:
            cols["t"].append(int(row[0]))
            cols["w_p"].append(float(row[1]))
            cols["loss"].append(float(row[2]))
            cols["decision"].append(int(row[3]))
            cols["eta"].append(float(row[4]))
            cols["epoch"].append(int(row[5]))
            cols["cbr"].append(None if row[6] == "" else int(row[6]))
            cols["amnesia"].append(None if row[7] == "" else int(row[7]))
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None

    def optional(name):
        vals = cols[name]
        if not vals or all(v is None for v in vals):
            return None
        if any(v is None for v in vals):
            raise TraceFormatError(f"column {name} is only partially filled")
        return vals

    try:
        return RunTrace(
            t=cols["t"], w_p=cols["w_p"], loss=cols["loss"], decision=cols["decision"],
            eta=cols["eta"], epoch=cols["epoch"], cbr=optional("cbr"),
            amnesia=optional("amnesia"), reset_times=resets,
        )
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from None


def format_summary(summary, extra=None):
    """Flat ``key=value`` block, one pair per line."""
    items = [
        ("T", summary.T),
        ("T_star", _fmt(summary.T_star)),
        ("V_star", _fmt(summary.V_star)),
        ("L_star", _fmt(summary.L_star)),
        ("error_rate", _fmt(summary.error_rate)),
        ("efficiency", _fmt(summary.efficiency)),
        ("predictions", summary.predictions),
        ("errors", _fmt(summary.errors)),
        ("resets", " ".join(str(r) for r in summary.reset_times)),
    ]
    for k, v in (extra or {}).items():
        items.append((k, v))
    return "".join(f"{k}={v}\n" for k, v in items)


def parse_summary(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"not a key=value line: {line!r}")
        out[key.strip()] = value.strip()
    return out


def write_summary(summary, path, extra=None):
    with open(path, "w") as fh:
        fh.write(format_summary(summary, extra))
