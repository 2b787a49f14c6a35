"""Command-line harness: seeded experiments, traces, summaries and bound reports.

Subcommands
-----------
run     run one variant over a synthetic, CSV or scored source, per replicate
oracle  write the rate-aware oracle's weights and summary
series  turn trace files into running efficiency / error-rate CSVs
grid    sweep alpha (as multiples of 1/T) and epsilon over replicates

Options may also come from a flat ``key=value`` file given with ``--config``;
command-line flags win. The default output directory is ``$SAFEPREDICT_OUT``
or ``./safepredict-out``.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import math
import os
import statistics
import sys

import numpy as np

from . import synth
from .baselines import (
    DriftingScorer,
    StaticScoredStream,
    read_scored_csv,
    run_stack,
    stack_trace,
)
from .bounds import check_trace
from .meta import MetaConfig, SafePredict, Variant
from .trace import (
    RunTrace,
    TraceFormatError,
    format_summary,
    read_csv,
    summarize,
    write_csv,
)

OUT_ENV = "SAFEPREDICT_OUT"
DEFAULT_OUT = "safepredict-out"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


def _fmt(x):
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def read_config_file(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment line."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


# --------------------------------------------------------------------------
# argument parsing


def _add_stream_flags(p):
    g = p.add_argument_group("synthetic change-point stream")
    g.add_argument("--horizon", type=int, default=50000, help="stream length T")
    g.add_argument("--num-change", type=int, default=1)
    g.add_argument("--eps-low", type=float, default=0.02)
    g.add_argument("--eps-hi", type=float, default=0.2)


def _add_common(p):
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--epsilon", type=float, default=0.05, help="target error rate")
    p.add_argument("--seed", type=int, default=0, help="base seed; replicate r uses seed+r")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")


def _add_meta_flags(p):
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.WS_DOUBLING.value)
    p.add_argument("--w-init", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=None, help="fixed learning rate (plain, adaptive)")
    p.add_argument("--alpha", type=float, default=None,
                   help="weight-shift floor; ws_doubling defaults to 10/T")
    p.add_argument("--beta", type=float, default=1.0, help="weight-shift ceiling (adaptive)")
    p.add_argument("--jobs", type=int, default=1, help="replicates run in parallel")


def build_parser():
    parser = argparse.ArgumentParser(prog="safepredict", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a variant per replicate and check its bound")
    _add_common(run)
    _add_meta_flags(run)
    _add_stream_flags(run)
    src = run.add_mutually_exclusive_group()
    src.add_argument("--losses", help="CSV with a loss column instead of the synthetic stream")
    src.add_argument("--scored", help="CSV of step,confidence,loss run through CBR")
    src.add_argument("--scored-synthetic", action="store_true",
                     help="synthetic scored stream with one concept change at T/2")
    run.add_argument("--amnesic", action="store_true", help="amnesic CBR (scored sources)")
    run.add_argument("--no-meta", action="store_true", help="standalone CBR (scored sources)")
    run.add_argument("--epoch-len", type=int, default=100, help="CBR recalibration period")
    run.add_argument("--folds", type=int, default=5, help="CBR cross-validation folds")
    run.add_argument("--scale", type=float, default=0.5, help="error scale of the synthetic scorer")

    orc = sub.add_parser("oracle", help="weights of the oracle that knows the true rates")
    _add_common(orc)
    _add_stream_flags(orc)

    ser = sub.add_parser("series", help="running efficiency and error rate of trace files")
    ser.add_argument("traces", nargs="+")
    ser.add_argument("--out", default=None)
    ser.add_argument("--config", help=argparse.SUPPRESS)

    grid = sub.add_parser("grid", help="alpha / epsilon sweep over replicates")
    _add_common(grid)
    _add_meta_flags(grid)
    _add_stream_flags(grid)
    grid.add_argument("--alpha-multipliers", default="0,1,5,10",
                      help="comma list k; alpha = k/T")
    grid.add_argument("--epsilons", default=None, help="comma list; defaults to --epsilon")
    grid.add_argument("--representative", action="store_true",
                      help="sweep the built-in set of change-point streams")
    return parser


def parse_args(argv):
    """Parse ``argv``, filling unset flags from ``--config`` if given."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in values.items():
            if key not in known or key in ("config", "help", "traces"):
                raise ConfigError(f"{args.config}: unknown key {key!r} for '{args.command}'")
            act = known[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    defaults[key] = act.type(raw) if act.type else raw
                except ValueError:
                    raise ConfigError(f"{args.config}: bad value for {key}: {raw!r}") from None
                if act.choices and defaults[key] not in act.choices:
                    raise ConfigError(f"{args.config}: {key} must be one of {list(act.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def output_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    return out


def _floats(text, name):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name} must be a comma-separated list of numbers") from None


# --------------------------------------------------------------------------
# experiment plumbing


def meta_config(args, horizon, alpha=None):
    variant = Variant(args.variant)
    kw = dict(epsilon=args.epsilon, w_init=args.w_init, variant=variant)
    if alpha is None:
        alpha = args.alpha
    if variant in (Variant.PLAIN, Variant.ADAPTIVE):
        if args.eta is None:
            raise ConfigError(f"variant {variant.value} needs --eta")
        kw["eta"] = args.eta
    elif args.eta is not None:
        raise ConfigError(f"variant {variant.value} picks its own rate; drop --eta")
    if variant is Variant.ADAPTIVE:
        kw.update(alpha=0.0 if alpha is None else alpha, beta=args.beta)
    elif variant is Variant.WS_DOUBLING:
        kw.update(alpha=10.0 / horizon if alpha is None else alpha, horizon=horizon)
    elif alpha not in (None, 0.0) or args.beta != 1.0:
        raise ConfigError(f"variant {variant.value} takes no --alpha/--beta")
    try:
        return MetaConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _spec(args, seed):
    try:
        return synth.ChangePointSpec(args.horizon, args.num_change, args.eps_low, args.eps_hi, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _source_kind(args):
    if getattr(args, "losses", None):
        return "losses"
    if getattr(args, "scored", None):
        return "scored"
    if getattr(args, "scored_synthetic", False):
        return "scored_synthetic"
    return "synthetic"


def _load_source(args):
    """Read any input file once; returns (kind, payload, horizon)."""
    kind = _source_kind(args)
    try:
        if kind == "losses":
            losses = synth.read_losses_csv(args.losses)
            return kind, losses, losses.shape[0]
        if kind == "scored":
            recs = read_scored_csv(args.scored)
            return kind, recs, len(recs)
    except OSError as exc:
        raise ConfigError(f"cannot read input: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{args.losses or args.scored}: {exc}") from None
    return kind, None, args.horizon


def run_replicate(job):
    """One replicate; pure function of its arguments. Returns the summary rows."""
    kind, payload, args, cfg, seed, rep_dir = job
    loss_seed, sp_seed = synth.derive_seeds(seed)
    os.makedirs(rep_dir, exist_ok=True)
    extra = {"seed": seed, "variant": cfg.variant.value if cfg else "none", "source": kind}

    if kind in ("synthetic", "losses"):
        if kind == "synthetic":
            losses = synth.generate_losses(_spec(args, loss_seed))
        else:
            losses = payload
        trace = SafePredict(cfg, seed=sp_seed).run(losses)
        meta_trace = trace
    else:
        if kind == "scored":
            source = StaticScoredStream(payload)
        else:
            source = DriftingScorer(args.horizon, scale=args.scale, seed=loss_seed)
        result = run_stack(source, args.epsilon, sp_config=cfg, seed=sp_seed,
                           amnesic=args.amnesic, epoch_len=args.epoch_len, folds=args.folds)
        trace = stack_trace(result)
        meta_trace = result.sp_trace
        half = result.horizon // 2
        extra.update(
            amnesia_events=int(result.amnesia.sum()),
            pre_change_efficiency=_fmt(result.efficiency(1, half)),
            post_change_efficiency=_fmt(result.efficiency(half + 1)),
            post_change_error_rate=_fmt(result.error_rate(half + 1)),
        )
        if cfg is not None:
            write_csv(meta_trace, os.path.join(rep_dir, "meta_trace.csv"))

    write_csv(trace, os.path.join(rep_dir, "trace.csv"))
    summary = summarize(trace)
    if cfg is not None:
        report = check_trace(meta_trace, cfg)
        bound = report.as_dict()
    else:
        report = None
        bound = {"bound": "none", "satisfied": "true"}
    with open(os.path.join(rep_dir, "summary.txt"), "w") as fh:
        fh.write(format_summary(summary, extra))
    with open(os.path.join(rep_dir, "bound.txt"), "w") as fh:
        fh.write("".join(f"{k}={v}\n" for k, v in bound.items()))
    return {
        "seed": seed,
        "T": summary.T,
        "T_star": summary.T_star,
        "efficiency": summary.efficiency,
        "error_rate": summary.error_rate,
        "bound_rhs": report.rhs_value if report else math.nan,
        "satisfied": report.satisfied if report else True,
        "resets": len(meta_trace.reset_times),
    }


def _map(fn, jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _stat(values, fn):
    vals = [v for v in values if not math.isnan(v)]
    return fn(vals) if vals else math.nan


AGG_FIELDS = ("efficiency", "error_rate", "T_star", "bound_rhs")


def write_aggregate(rows, path, key_cols=()):
    """Per-replicate rows followed by mean and median lines."""
    cols = list(key_cols) + ["replicate", "seed", "T", "T_star", "efficiency",
                             "error_rate", "bound_rhs", "satisfied", "resets"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in cols) + "\n")


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def aggregate_stats(rows):
    out = {"replicates": len(rows), "violations": sum(not r["satisfied"] for r in rows)}
    for f in AGG_FIELDS:
        vals = [float(r[f]) for r in rows]
        out[f"mean_{f}"] = _fmt(_stat(vals, statistics.fmean))
        out[f"median_{f}"] = _fmt(_stat(vals, statistics.median))
    return out


# --------------------------------------------------------------------------
# subcommands


def _check_replicates(args):
    if args.replicates < 1:
        raise ConfigError("--replicates must be at least 1")
    if getattr(args, "jobs", 1) < 1:
        raise ConfigError("--jobs must be at least 1")


def cmd_run(args):
    _check_replicates(args)
    kind, payload, horizon = _load_source(args)
    if kind in ("losses", "synthetic") and (args.amnesic or args.no_meta):
        raise ConfigError("--amnesic and --no-meta need a scored source")
    if args.amnesic and args.no_meta:
        raise ConfigError("--amnesic needs the meta-algorithm; drop --no-meta")
    cfg = None if args.no_meta else meta_config(args, horizon)
    out = output_dir(args)
    jobs = [(kind, payload, args, cfg, args.seed + r, os.path.join(out, f"rep{r:03d}"))
            for r in range(args.replicates)]
    rows = _map(run_replicate, jobs, args.jobs)
    for r, row in enumerate(rows):
        row["replicate"] = r
    write_aggregate(rows, os.path.join(out, "aggregate.csv"))
    stats = aggregate_stats(rows)
    text = "".join(f"{k}={v}\n" for k, v in stats.items())
    with open(os.path.join(out, "aggregate.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK if stats["violations"] == 0 else EXIT_VIOLATION


def cmd_oracle(args):
    _check_replicates(args)
    out = output_dir(args)
    lines = []
    for r in range(args.replicates):
        seed = args.seed + r
        spec = _spec(args, synth.derive_seeds(seed)[0])
        losses = synth.generate_losses(spec)
        w = synth.oracle_weights(spec, args.epsilon)
        n = spec.horizon
        trace = RunTrace(t=np.arange(1, n + 1), w_p=w, loss=losses,
                         decision=w.astype(np.int8), eta=np.full(n, math.nan),
                         epoch=np.zeros(n, dtype=np.int64))
        rep_dir = os.path.join(out, f"rep{r:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        write_csv(trace, os.path.join(rep_dir, "oracle.csv"))
        text = format_summary(summarize(trace), {"seed": seed, "epsilon": _fmt(args.epsilon)})
        with open(os.path.join(rep_dir, "summary.txt"), "w") as fh:
            fh.write(text)
        lines.append(text)
    sys.stdout.write(lines[0] if len(lines) == 1 else "".join(
        f"# replicate {r}\n{t}" for r, t in enumerate(lines)))
    return EXIT_OK


def running_series(trace):
    """Cumulative efficiency and error rate after each step."""
    w = np.asarray(trace.w_p, dtype=float)
    l = np.asarray(trace.loss, dtype=float)
    t_star = np.cumsum(w)
    l_star = np.cumsum(w * l)
    steps = np.arange(1, w.size + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        err = np.where(t_star > 0, l_star / t_star, np.nan)
    return np.asarray(trace.t), t_star / steps, err


def cmd_series(args):
    out = output_dir(args)
    for path in args.traces:
        try:
            trace = read_csv(path)
        except OSError as exc:
            raise ConfigError(f"cannot read trace {path}: {exc.strerror}") from None
        except TraceFormatError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        t, eff, err = running_series(trace)
        stem = os.path.splitext(os.path.basename(path))[0]
        parent = os.path.basename(os.path.dirname(os.path.abspath(path)))
        name = f"{parent}_{stem}.series.csv" if parent else f"{stem}.series.csv"
        with open(os.path.join(out, name), "w") as fh:
            fh.write("t,efficiency,error_rate\n")
            fh.write("".join(f"{int(a)},{_fmt(b)},{_fmt(c)}\n" for a, b, c in zip(t, eff, err)))
        print(os.path.join(out, name))
    return EXIT_OK


def cmd_grid(args):
    _check_replicates(args)
    if _source_kind(args) != "synthetic":
        raise ConfigError("grid runs on synthetic change-point streams only")
    mults = _floats(args.alpha_multipliers, "alpha-multipliers")
    epsilons = _floats(args.epsilons, "epsilons") if args.epsilons else [args.epsilon]
    if not mults or not epsilons:
        raise ConfigError("grid needs at least one alpha multiplier and one epsilon")
    if args.representative:
        streams = [(n, lo, hi) for n, lo, hi in synth.REPRESENTATIVE_GRID]
    else:
        streams = [(args.num_change, args.eps_low, args.eps_hi)]
    out = output_dir(args)
    T = args.horizon

    cells, jobs = [], []
    for n_change, lo, hi in streams:
        for eps in epsilons:
            for k in mults:
                a = argparse.Namespace(**vars(args))
                a.num_change, a.eps_low, a.eps_hi, a.epsilon = n_change, lo, hi, eps
                cfg = meta_config(a, T, alpha=k / T)
                cell = f"n{n_change}_lo{lo!r}_hi{hi!r}_eps{eps!r}_k{k!r}"
                cells.append((n_change, lo, hi, eps, k, cfg.alpha))
                for r in range(args.replicates):
                    jobs.append(("synthetic", None, a, cfg, args.seed + r,
                                 os.path.join(out, cell, f"rep{r:03d}")))
    rows = _map(run_replicate, jobs, args.jobs)

    keys = ["num_change", "eps_low", "eps_hi", "epsilon", "alpha_multiplier", "alpha"]
    i = 0
    grouped = []
    for cell in cells:
        chunk = rows[i:i + args.replicates]
        i += args.replicates
        for r, row in enumerate(chunk):
            row["replicate"] = r
            row.update(zip(keys, cell))
        grouped.append((cell, chunk))
    write_aggregate(rows, os.path.join(out, "grid.csv"), key_cols=keys)

    violations = 0
    with open(os.path.join(out, "grid_summary.csv"), "w") as fh:
        stat_cols = [k for k in aggregate_stats(rows) if k != "replicates"]
        fh.write(",".join(keys + ["replicates"] + stat_cols + ["oracle_efficiency"]) + "\n")
        for cell, chunk in grouped:
            stats = aggregate_stats(chunk)
            violations += stats["violations"]
            spec = synth.ChangePointSpec(T, cell[0], cell[1], cell[2], 0)
            oracle = float(synth.oracle_weights(spec, cell[3]).mean())
            vals = [_cell(c) for c in cell] + [str(stats["replicates"])]
            vals += [str(stats[k]) for k in stat_cols] + [_fmt(oracle)]
            fh.write(",".join(vals) + "\n")
    with open(os.path.join(out, "grid_summary.csv")) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "series": cmd_series, "grid": cmd_grid}


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"safepredict: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"safepredict: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
