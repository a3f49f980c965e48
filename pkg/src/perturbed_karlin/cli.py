"""Command-line front end: simulate, verify, limits, plotdata.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 resource limit.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .analytic import regime_classify
from .boxes import MalformedBoxError, format_boxes, parse_boxes
from .karlin_process import (
    CANONICAL,
    ModelParams,
    ResourceLimitError,
    occupancy_stats,
    parse_number,
    simulate_path,
    top_locations,
    write_path_csv,
)
from .limit_measures import (
    LimitParameterError,
    SignalEnvironment,
    SignalEnvironmentError,
    TruncationPolicy,
    sample_box_values,
)
from .poisson_karlin import simulate_marked_points, write_points_csv
from .rng import RngStream
from .samplers import DomainError, ParetoParam
from .verify.config import ConfigError, ExperimentConfig
from .verify.suites import run_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3
TOOL = "perturbed-karlin"


class UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


def header_lines(config: dict, seed) -> list[str]:
    blob = json.dumps({k: _jsonable(v) for k, v in config.items()}, sort_keys=True, default=str)
    return [
        f"tool: {TOOL} {__version__}",
        f"config_sha256: {hashlib.sha256(blob.encode()).hexdigest()}",
        f"seed: {seed}",
        f"config: {blob}",
    ]


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return d


def _param(args, cfg, name, key=None):
    v = getattr(args, name, None)
    if v is None:
        v = cfg.get(key or name)
    return None if v is None else parse_number(v)


def resolve_params(args, cfg: dict, need=("alpha", "alpha_prime", "beta")) -> dict:
    """Explicit flags, then config keys, then the canonical triple of ``--regime``."""
    vals = {k: _param(args, cfg, k) for k in ("alpha", "alpha_prime", "beta")}
    regime = getattr(args, "regime", None) or cfg.get("regime")
    if regime in CANONICAL:
        for k, v in zip(("alpha", "alpha_prime", "beta"), CANONICAL[regime]):
            if vals[k] is None:
                vals[k] = v
    elif regime not in (None, "auto"):
        raise UsageError(f"unknown regime {regime!r}")
    missing = [k for k in need if vals[k] is None]
    if missing:
        raise UsageError("missing parameters: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return vals


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    p = resolve_params(args, cfg)
    params = ModelParams(p["alpha"], p["alpha_prime"], p["beta"])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    lam = args.lam if args.lam is not None else cfg.get("lambda")
    rng = RngStream(seed)
    if lam is not None:
        lam = float(lam)
        if not lam > 0:
            raise UsageError("--lambda must be positive")
        dim = args.dim or int(cfg.get("dim", 1))
        resolved = {**params.to_dict(), "lambda": lam, "dim": dim}
        pts = simulate_marked_points(params, lam, dim, rng)
        with _open_out(args.out) as fh:
            write_points_csv(pts, fh, header_lines(resolved, seed))
        mx = float(pts.products.max()) if pts.count else 0.0
        print(f"N={pts.count} K={pts.signal_labels.size} max_x={mx:.6g} regime={params.regime.value}", file=sys.stderr)
        return EXIT_OK
    n = args.n if args.n is not None else cfg.get("n")
    if n is None:
        raise UsageError("need --n (or --lambda)")
    n = int(n)
    if n < 1:
        raise UsageError("--n must be >= 1")
    resolved = {**params.to_dict(), "n": n}
    path = simulate_path(params, n, rng)
    with _open_out(args.out) as fh:
        write_path_csv(path, fh, header_lines(resolved, seed))
    st = occupancy_stats(path)
    print(f"n={n} K_n={st.K_n} max_x={float(path.products.max()):.6g} regime={params.regime.value}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    d = _load_config(args.config)
    overrides = {
        "suite": args.suite,
        "seed": args.seed,
        "alpha": args.alpha,
        "alpha_prime": args.alpha_prime,
        "beta": args.beta,
        "regime": args.regime,
        "n": args.n,
        "lam": args.lam,
        "reps": args.reps,
        "boxes": args.boxes,
        "threads": args.threads,
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    if "suite" not in d:
        raise UsageError("need --suite or a config with a suite")
    cfg = ExperimentConfig.from_dict(d)
    report = run_experiment(cfg)
    with _open_out(args.out) as fh:
        fh.write(report.to_json() + "\n")
    if args.cdf_out:
        with open(args.cdf_out, "w", newline="") as fh:
            for line in header_lines(cfg.to_dict(), cfg.seed):
                fh.write(f"# {line}\n")
            report.write_cdf_csv(fh)
    for line in report.summary_lines():
        print(line, file=sys.stderr)
    ok = report.bonferroni_passed
    print(f"suite {cfg.suite.value}: {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


_KIND_NEEDS = {
    "is": ("alpha",),
    "karlin": ("alpha", "beta"),
    "signal": ("alpha", "alpha_prime", "beta"),
    "critical": ("alpha_prime", "beta"),
    "noise": ("alpha", "alpha_prime", "beta"),
}


def cmd_limits(args) -> int:
    cfg = _load_config(args.config)
    kind = (args.kind or cfg.get("kind") or "").lower()
    if kind not in _KIND_NEEDS:
        raise UsageError(f"--kind must be one of {sorted(_KIND_NEEDS)}")
    p = resolve_params(args, cfg, _KIND_NEEDS[kind])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    reps = args.reps if args.reps is not None else int(cfg.get("samples", 1000))
    if reps < 1:
        raise UsageError("--samples must be >= 1")
    dim = args.dim or int(cfg.get("dim", 1))
    boxes = parse_boxes(args.boxes or cfg.get("boxes") or ";".join(["0:1"] * dim))
    if boxes[0].dim != dim:
        raise UsageError(f"boxes are {boxes[0].dim}-dimensional but --dim is {dim}")
    m_min = args.m_min if args.m_min is not None else min(b.volume for b in boxes)
    policy = TruncationPolicy(m_min=m_min, tol=args.tol)
    rng = RngStream(seed)
    kw = {}
    if kind in ("is", "karlin", "signal"):
        kw["alpha"] = float(p["alpha"])
    if kind in ("karlin", "signal", "critical"):
        kw["beta"] = float(p["beta"])
    if kind == "critical":
        kw["alpha_prime"] = float(p["alpha_prime"])
    if kind == "signal":
        kw["noise_law"] = ParetoParam(float(p["alpha_prime"]))
    if kind == "noise":
        params = ModelParams(p["alpha"], p["alpha_prime"], p["beta"])
        kw["alpha_prime"] = float(p["alpha_prime"])
        if args.annealed:
            kw["params"] = params
        else:
            kw["env"] = SignalEnvironment.draw(params, rng.child(0xE17))
    values = sample_box_values(kind, boxes, reps, rng, dim=dim, policy=policy, **kw)
    resolved = {k: _jsonable(v) for k, v in p.items() if v is not None}
    resolved.update({"kind": kind, "samples": reps, "boxes": format_boxes(boxes), "m_min": m_min, "tol": args.tol})
    if kind == "noise":
        resolved["annealed"] = bool(args.annealed)
        if not args.annealed:
            resolved["environment_moment"] = kw["env"].moment
    with _open_out(args.out) as fh:
        for line in header_lines(resolved, seed):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "box_id", "value"])
        r_idx, b_idx = np.indices(values.shape)
        w.writerows(zip(r_idx.ravel().tolist(), b_idx.ravel().tolist(), map(repr, values.ravel().tolist())))
    return EXIT_OK


def cmd_plotdata(args) -> int:
    cfg = _load_config(args.config)
    p = resolve_params(args, cfg)
    params = ModelParams(p["alpha"], p["alpha_prime"], p["beta"])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    n = int(args.n if args.n is not None else cfg.get("n", 10**5))
    if n < 1:
        raise UsageError("--n must be >= 1")
    k = int(args.top if args.top is not None else cfg.get("top", 5))
    if not 1 <= k <= n:
        raise UsageError("--top must lie in [1, n]")
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    resolved = {**params.to_dict(), "n": n, "top": k, "regime": params.regime.value}
    head = header_lines(resolved, seed)
    path = simulate_path(params, n, RngStream(seed))
    with open(os.path.join(outdir, "path.csv"), "w", newline="") as fh:
        write_path_csv(path, fh, head)
    tops = top_locations(path, k)
    for series, rows in tops.items():
        with open(os.path.join(outdir, f"top_{series}.csv"), "w", newline="") as fh:
            for line in head:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "i", "location", "value"])
            w.writerows((r + 1, i, repr(i / n), repr(v)) for r, (i, v) in enumerate(rows))
    print(f"wrote path.csv, top_x.csv, top_sigma.csv, top_z.csv to {outdir}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _model_flags(sp):
    sp.add_argument("--alpha", type=str)
    sp.add_argument("--alpha-prime", dest="alpha_prime", type=str)
    sp.add_argument("--beta", type=str)
    sp.add_argument("--regime", choices=[*CANONICAL, "auto"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog=TOOL, description="Perturbed Karlin model toolkit")
    ap.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a path (or a Poisson-Karlin point set with --lambda)")
    _model_flags(s)
    s.add_argument("--n", type=int)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--dim", type=int)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a verification suite")
    _model_flags(v)
    v.add_argument("--suite", type=str.upper, choices=["SIBUYA", "STABLE", "OCCUPANCY", "RSM", "REGIME", "POISSONIZATION"])
    v.add_argument("--n", type=int)
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--reps", "--samples", dest="reps", type=int)
    v.add_argument("--boxes")
    v.add_argument("--cdf-out", dest="cdf_out")
    v.set_defaults(func=cmd_verify)
    # "all" runs every canonical regime in the regime and poissonization suites
    for a in v._actions:
        if a.dest == "regime":
            a.choices = [*CANONICAL, "auto", "all"]

    li = sub.add_parser("limits", help="sample limit random sup-measures on boxes")
    _model_flags(li)
    li.add_argument("--kind", type=str.lower, choices=sorted(_KIND_NEEDS))
    li.add_argument("--samples", "--reps", dest="reps", type=int)
    li.add_argument("--boxes")
    li.add_argument("--dim", type=int)
    li.add_argument("--m-min", dest="m_min", type=float)
    li.add_argument("--tol", type=float, default=1e-4)
    li.add_argument("--annealed", action="store_true", help="noise kind: fresh environment per sample")
    li.set_defaults(func=cmd_limits)

    pl = sub.add_parser("plotdata", help="path and top-k marker CSVs for plotting")
    _model_flags(pl)
    pl.add_argument("--n", type=int)
    pl.add_argument("--top", type=int)
    pl.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MemoryError:
        print("error: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    except (UsageError, ConfigError, MalformedBoxError, LimitParameterError, SignalEnvironmentError, DomainError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
