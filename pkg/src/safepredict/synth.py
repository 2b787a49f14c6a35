"""Synthetic change-point Bernoulli losses and the oracle that knows the rates."""

import csv
from dataclasses import dataclass
import os

import numpy as np

__all__ = [
    "ChangePointSpec",
    "error_rate_at",
    "error_rates",
    "generate_losses",
    "oracle_weights",
    "REPRESENTATIVE_GRID",
    "representative_specs",
    "write_losses_csv",
    "read_losses_csv",
    "derive_seeds",
]

# (num_change, eps_low, eps_hi); reconstructed grid, not the published table
REPRESENTATIVE_GRID = tuple(
    (n, lo, hi)
    for n in (0, 1, 3, 9)
    for lo, hi in ((0.02, 0.2), (0.02, 0.08), (0.1, 0.2))
)


@dataclass(frozen=True)
class ChangePointSpec:
    """Losses alternate between two Bernoulli rates over equal blocks.

    The first block runs at ``eps_hi``.
    """

    horizon: int
    num_change: int = 1
    eps_low: float = 0.02
    eps_hi: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.num_change < 0:
            raise ValueError("num_change must be non-negative")
        if self.horizon < self.num_change + 1:
            raise ValueError("need at least one step per block")
        for name in ("eps_low", "eps_hi"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.eps_low > self.eps_hi:
            raise ValueError("eps_low must not exceed eps_hi")


def derive_seeds(seed, n=2):
    """Independent child seeds so loss draws and decision draws never share a stream."""
    return [int(x) for x in np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)]


def _block(spec, t):
    # ceil(t * (n + 1) / T) in exact integer arithmetic
    return -(-t * (spec.num_change + 1) // spec.horizon)


def error_rate_at(spec, t):
    if not 1 <= t <= spec.horizon:
        raise ValueError(f"t={t} outside 1..{spec.horizon}")
    return spec.eps_low if _block(spec, t) % 2 == 0 else spec.eps_hi


def error_rates(spec):
    t = np.arange(1, spec.horizon + 1, dtype=np.int64)
    even = (-(-t * (spec.num_change + 1) // spec.horizon)) % 2 == 0
    return np.where(even, spec.eps_low, spec.eps_hi)


def generate_losses(spec):
    """0/1 losses, one uniform draw per step from ``default_rng(spec.seed)``."""
    u = np.random.default_rng(spec.seed).random(spec.horizon)
    return (u < error_rates(spec)).astype(float)


def oracle_weights(spec, epsilon):
    """Predict exactly when the true rate does not exceed ``epsilon``."""
    return (error_rates(spec) <= epsilon).astype(float)


def representative_specs(horizon, seed=0):
    return [ChangePointSpec(horizon, n, lo, hi, seed) for n, lo, hi in REPRESENTATIVE_GRID]


def write_losses_csv(losses, dest):
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            return write_losses_csv(losses, fh)
    dest.write("step,loss\n")
    dest.write("".join(f"{i},{float(l)!r}\n" for i, l in enumerate(losses, start=1)))


def read_losses_csv(source):
    """Read a ``step,loss`` file (a bare ``loss`` column is also accepted)."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_losses_csv(fh)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or "loss" not in reader.fieldnames:
        raise ValueError("line 1: loss file needs a 'loss' column")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            v = float(row["loss"])
        except (TypeError, ValueError):
            raise ValueError(f"line {lineno}: bad loss value {row.get('loss')!r}") from None
        if not 0 <= v <= 1:
            raise ValueError(f"line {lineno}: loss {v} outside [0, 1]")
        out.append(v)
    return np.array(out, dtype=float)
