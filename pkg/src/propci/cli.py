"""Command-line front end: ``propci <subcommand> ...``.

Options can also come from a flat ``key=value`` file passed with
``--config``; command-line flags win over the file, which wins over the
built-in defaults (alpha 0.05, OR_S 1.20, n in {32, 64, 2048}).
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from . import COMPILED, __version__
from . import evaluation as ev
from .estimators import (METHODS, RAW_BY_DEFAULT, BinomialSample, ConfidenceSpec, MethodSpec,
                         bound_table, interval, method_properties)
from .numerics import DomainError

TABLE2_METHODS = ("boot_percentile", "boot_basic", "wald", "clopper_pearson",
                  "clopper_pearson_midp", "wilson", "wald_logit_modified",
                  "likelihood_ratio_modified")
TABLE2_SAMPLES = ((1, 225), (2, 46))
CURVE_COLUMNS = ("method", "regime", "n", "lambda", "p0", "alpha_l", "alpha_u", "two_sided",
                 "w_l", "w_u", "ratio_l", "ratio_u")
PLOT_COLORS = {32: "red", 64: "green", 2048: "blue"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ReferenceLines:
    """Tolerance band around the nominal one-sided risk: x1.5 above, /1.5 below."""

    alpha: float = 0.05
    factor: float = 1.5

    @property
    def upper_line(self) -> float:
        return self.alpha / 2 * self.factor

    @property
    def lower_line(self) -> float:
        return self.alpha / 2 / self.factor


@dataclass
class RunConfig:
    methods: list[str] = field(default_factory=lambda: ["clopper_pearson_midp"])
    alpha: float = 0.05
    sample_sizes: list[int] = field(default_factory=lambda: [32, 64, 2048])
    lambda_min: float = 0.05
    lambda_max: float = 100.0
    lambda_count: int = 400
    or_s: float = 1.2
    regime: str = "local_average"
    reference: str = "clopper_pearson_midp"
    output: str | None = None
    format: str = "csv"
    clamp: bool = True
    nodes: int = ev.DEFAULT_NODES
    seed: int | None = None
    wilson_level: str = "alpha"

    def grid(self) -> ev.EvaluationGrid:
        lams = np.geomspace(self.lambda_min, self.lambda_max, self.lambda_count)
        return ev.EvaluationGrid(tuple(self.sample_sizes), tuple(lams), self.alpha, self.or_s)

    def method_specs(self) -> list[MethodSpec]:
        return [MethodSpec(m, self.wilson_level) for m in self.methods]


# ---------------------------------------------------------------- formatting

def format_number(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    s = f"{float(v):.9g}"
    return "0" if s == "-0" else s


def format_percent(v: float) -> str:
    """Percent rendering, rounded half away from zero.

    One decimal from 0.1% upward; below that, one significant digit
    (0.0785 -> "0.08"), so that small nonzero bounds stay visible.
    """
    pct = Decimal(repr(float(v) * 100.0))
    if pct == 0:
        return "0"
    places = 1 if abs(pct) >= Decimal("0.1") else -pct.adjusted()
    q = pct.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    if abs(q) >= Decimal("0.1"):
        q = q.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    elif q.adjusted() > pct.adjusted():
        # rounding carried into the next digit, e.g. 0.0096 -> 0.010
        q = q.quantize(Decimal(1).scaleb(-places + 1), rounding=ROUND_HALF_UP)
    return str(q)


def percent_range(lo: float, up: float) -> str:
    return f"{format_percent(lo)}% to {format_percent(up)}%"


def write_csv(rows, columns, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else format_number(r[c]) for c in columns])


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------- config

_LIST_KEYS = {"methods": str, "sample_sizes": int}
_SCALAR_KEYS = {"alpha": float, "lambda_min": float, "lambda_max": float, "lambda_count": int,
                "or_s": float, "regime": str, "reference": str, "output": str, "format": str,
                "nodes": int, "seed": int, "wilson_level": str}
_ALIASES = {"method": "methods", "n": "sample_sizes"}


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def read_config(path: str) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
        try:
            if key in _LIST_KEYS:
                out[key] = [_LIST_KEYS[key](v.strip()) for v in val.split(",") if v.strip()]
            elif key in _SCALAR_KEYS:
                out[key] = _SCALAR_KEYS[key](val)
            elif key == "clamp":
                out[key] = _parse_bool(val)
            else:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    merged = read_config(args.config) if getattr(args, "config", None) else {}
    for key in vars(cfg):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    for key, val in merged.items():
        setattr(cfg, key, val)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    for m in cfg.methods:
        if m not in METHODS:
            raise UsageError(f"--method: unknown method {m!r}")
    if cfg.reference not in METHODS:
        raise UsageError(f"--reference: unknown method {cfg.reference!r}")
    if not 0.0 < cfg.alpha < 1.0:
        raise UsageError(f"--alpha: must lie in (0, 1), got {cfg.alpha}")
    if cfg.or_s < 1.0:
        raise UsageError(f"--or-s: must be >= 1, got {cfg.or_s}")
    if any(n < 1 for n in cfg.sample_sizes):
        raise UsageError("--n: sample sizes must be positive")
    if not 0.0 < cfg.lambda_min <= cfg.lambda_max or cfg.lambda_count < 1:
        raise UsageError("--lambda-min/--lambda-max/--lambda-count: invalid range")
    if cfg.regime not in ev.REGIMES:
        raise UsageError(f"--regime: choose from {', '.join(ev.REGIMES)}")
    if cfg.format not in ("csv", "svg"):
        raise UsageError("--format: choose csv or svg")
    if cfg.nodes < 16:
        raise UsageError("--nodes: at least 16 quadrature nodes")
    if cfg.wilson_level not in ("alpha", "half_alpha"):
        raise UsageError("--wilson-level: choose alpha or half_alpha")


# ---------------------------------------------------------------- commands

def cmd_interval(args) -> int:
    if args.n < 1 or not 0 <= args.x <= args.n:
        raise UsageError(f"--x/--n: need 0 <= x <= n and n >= 1, got x={args.x}, n={args.n}")
    if not 0.0 < args.alpha < 1.0:
        raise UsageError(f"--alpha: must lie in (0, 1), got {args.alpha}")
    spec = MethodSpec(args.method, args.wilson_level)
    iv = interval(spec, BinomialSample(args.x, args.n), ConfidenceSpec(args.alpha))
    clamp = args.clamp if args.clamp is not None else spec.id not in RAW_BY_DEFAULT
    lo, up = iv.bounds(raw=not clamp)
    print(f"method   {spec.id}")
    print(f"sample   x={args.x} n={args.n} alpha={format_number(args.alpha)}")
    print(f"point    {iv.point:.9g}")
    print(f"raw      [{iv.lower_raw:.9g}, {iv.upper_raw:.9g}]")
    print(f"clamped  [{format_number(iv.lower)}, {format_number(iv.upper)}]")
    print(f"percent  {percent_range(lo, up)}")
    return 0


def table2_rows(alpha: float = 0.05) -> list[dict]:
    conf = ConfidenceSpec(alpha)
    rows = []
    for m in TABLE2_METHODS:
        for x, n in TABLE2_SAMPLES:
            iv = interval(m, BinomialSample(x, n), conf)
            lo, up = iv.bounds(raw=m in RAW_BY_DEFAULT)
            rows.append({"method": m, "x": x, "n": n,
                         "lower_pct": format_percent(lo), "upper_pct": format_percent(up),
                         "lower_exact": lo, "upper_exact": up})
    return rows


def cmd_table2(args) -> int:
    buf = io.StringIO()
    write_csv(table2_rows(args.alpha), ("method", "x", "n", "lower_pct", "upper_pct",
                                         "lower_exact", "upper_exact"), buf)
    _emit(buf.getvalue(), args.output)
    return 0


def curve_rows(cfg: RunConfig, widths: bool) -> list[dict]:
    grid = cfg.grid()
    regime = "local_average" if widths else cfg.regime
    reference = MethodSpec(cfg.reference, cfg.wilson_level) if widths else None
    rows = []
    for spec in cfg.method_specs():
        for pt in ev.error_curve(spec, grid, regime, widths=widths, reference=reference,
                                 m=cfg.nodes):
            hw = pt.widths
            rows.append({"method": pt.method, "regime": pt.regime, "n": pt.n,
                         "lambda": pt.lam, "p0": pt.p0,
                         "alpha_l": pt.errors.alpha_l, "alpha_u": pt.errors.alpha_u,
                         "two_sided": pt.errors.two_sided,
                         "w_l": hw.w_l if hw else None, "w_u": hw.w_u if hw else None,
                         "ratio_l": hw.ratio_l if hw else None,
                         "ratio_u": hw.ratio_u if hw else None})
    rows.sort(key=lambda r: (r["method"], r["n"], r["lambda"]))
    return rows


def render_svg(rows, cfg: RunConfig, widths: bool, path: str) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise UsageError("--format svg needs matplotlib (pip install propci[plot])") from exc
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(len(methods), 2, figsize=(10, 3.2 * len(methods)), squeeze=False)
    keys = (("ratio_l", "ratio_u") if widths else ("alpha_l", "alpha_u"))
    lines = ReferenceLines(cfg.alpha)
    for i, m in enumerate(methods):
        for j, key in enumerate(keys):
            ax = axes[i][j]
            for n in cfg.sample_sizes:
                sel = [r for r in rows if r["method"] == m and r["n"] == n]
                ax.plot([r["lambda"] for r in sel], [r[key] for r in sel],
                        color=PLOT_COLORS.get(n), label=f"n = {n}",
                        linestyle="--" if cfg.regime == "local_average" or widths else "-")
            if not widths:
                for y in (lines.upper_line, lines.lower_line):
                    ax.axhline(y, color="black", linewidth=0.8)
            ax.set_xscale("log")
            ax.set_xlabel("expected successes n p0")
            ax.set_title(f"{m}: {key}")
            ax.legend(fontsize=7)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from exc
    finally:
        plt.close(fig)


def _curves(args, widths: bool) -> int:
    cfg = build_config(args)
    rows = curve_rows(cfg, widths)
    if cfg.format == "svg":
        if not cfg.output:
            raise UsageError("--format svg requires --output")
        render_svg(rows, cfg, widths, cfg.output)
        return 0
    buf = io.StringIO()
    write_csv(rows, CURVE_COLUMNS, buf)
    _emit(buf.getvalue(), cfg.output)
    return 0


def cmd_curves(args) -> int:
    return _curves(args, widths=False)


def cmd_halfwidths(args) -> int:
    return _curves(args, widths=True)


def cmd_scan(args) -> int:
    cfg = build_config(args)
    grid = cfg.grid()
    rows = []
    for spec in cfg.method_specs():
        res = ev.max_error_scan(spec, grid, cfg.regime, m=cfg.nodes)
        rows.append({"method": spec.id, "regime": cfg.regime, "max_error": res.max_error,
                     "side": res.side, "n": res.n, "lambda": res.lam})
        print(f"{spec.id:<28} {cfg.regime:<14} max={res.max_error:.6g} side={res.side} "
              f"n={res.n} lambda={res.lam:.6g}")
    if cfg.output:
        buf = io.StringIO()
        write_csv(rows, ("method", "regime", "max_error", "side", "n", "lambda"), buf)
        _emit(buf.getvalue(), cfg.output)
    return 0


def cmd_validity(args) -> int:
    conf = ConfidenceSpec(args.alpha)
    grid = None
    if args.sample_sizes:
        lams = sorted({lam for n in args.sample_sizes for lam in ev.validity_lambdas(n)})
        grid = ev.EvaluationGrid(tuple(args.sample_sizes), tuple(lams), args.alpha, args.or_s)
    try:
        rep = ev.wald_validity_check(args.threshold, conf, grid, method=args.method)
    except ev.EmptyRegionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"{verdict} threshold={rep.threshold} max_one_sided={rep.max_error:.6g} "
          f"limit={rep.limit:.6g} side={rep.side} n={rep.n} lambda={rep.lam:.6g} "
          f"points={rep.qualifying_points}")
    return 0


def _observed_equivariance(method, sizes) -> float:
    worst = 0.0
    for n in sizes:
        t = bound_table(method, n)
        worst = max(worst, float(np.max(np.abs(t.lower_raw - (1.0 - t.upper_raw[::-1])))))
    return worst


def _observed_monotone(method, sizes) -> bool:
    for n in sizes:
        t = bound_table(method, n)
        if np.any(np.diff(t.lower) < -1e-12) or np.any(np.diff(t.upper) < -1e-12):
            return False
    return True


def cmd_properties(args) -> int:
    methods = args.method or list(METHODS)
    sizes = range(1, args.max_n + 1)
    cols = ("equivariant", "analytic_solution", "monotone_in_x", "generalizes_multivariate")
    print(f"{'method':<28}" + "".join(f"{c:<26}" for c in cols))
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"--method: unknown method {m!r}")
        p = method_properties(m)
        print(f"{m:<28}" + "".join(f"{('yes' if getattr(p, c) else 'no'):<26}" for c in cols))
    print()
    print(f"empirical checks over n = 1..{args.max_n}")
    ok_all = True
    for m in methods:
        p = method_properties(m)
        dev = _observed_equivariance(m, sizes)
        eq_ok = (dev <= 1e-12) == p.equivariant
        mono = _observed_monotone(m, sizes)
        mono_ok = mono or not p.monotone_in_x
        ok_all &= eq_ok and mono_ok
        yn = lambda b: "yes" if b else "no"  # noqa: E731
        print(f"{m:<28} equivariant: {yn(p.equivariant)} (max deviation {dev:.1e}) "
              f"{'✓' if eq_ok else '✗'}   monotone_in_x: {yn(p.monotone_in_x)} "
              f"(observed on grid: {yn(mono)}) {'✓' if mono_ok else '✗'}")
    return 0 if ok_all else 1


def cmd_calibrate(args) -> int:
    if not 0.0 < args.p0 < 1.0:
        raise UsageError(f"--p0: must lie in (0, 1), got {args.p0}")
    if args.or_s < 1.0:
        raise UsageError(f"--or-s: must be >= 1, got {args.or_s}")
    model = ev.RandomProportionModel(args.p0, args.or_s)
    print(f"p0={args.p0:.9g} or_s={args.or_s:.9g} sigma={model.sigma:.9g} mu={model.mu:.12g}")
    return 0


def cmd_oracle(args) -> int:
    if args.seed is None:
        raise UsageError("--seed: an explicit seed is required")
    if args.draws < 100_000:
        raise UsageError("--draws: at least 100000")
    if not 0.0 < args.lam < args.n:
        raise UsageError("--lambda: need 0 < lambda < n")
    conf = ConfidenceSpec(args.alpha)
    spec = MethodSpec(args.method)
    p = args.lam / args.n
    if args.random_size:
        model = ev.RandomSampleSizeModel(args.n, p, math.log(args.or_s))
        exact = ev.random_size_errors(spec, model, conf)
        widths = None
    else:
        model = ev.RandomProportionModel(p, args.or_s)
        exact = ev.local_average_errors(spec, args.n, model, conf)
        widths = ev.local_average_half_widths(spec, args.n, model, conf)
    mc = ev.monte_carlo_oracle(spec, model, conf, n=args.n, draws=args.draws, seed=args.seed)
    e = mc.errors
    print(f"{'quantity':<10}{'quadrature':>14}{'monte_carlo':>14}{'se':>12}{'z':>8}")
    pairs = [("alpha_l", exact.alpha_l, e.alpha_l, e.se_l), ("alpha_u", exact.alpha_u, e.alpha_u, e.se_u)]
    if widths is not None:
        pairs += [("w_l", widths.w_l, mc.w_l, mc.se_w_l), ("w_u", widths.w_u, mc.w_u, mc.se_w_u)]
    for name, q, s, se in pairs:
        z = (s - q) / se if se > 0 else 0.0
        print(f"{name:<10}{q:>14.6g}{s:>14.6g}{se:>12.3g}{z:>8.2f}")
    return 0


# ---------------------------------------------------------------- parser

def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


def _method_list(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def _add_grid_options(p: argparse.ArgumentParser) -> None:
    # defaults are None so that config-file values are not overridden
    p.add_argument("--config", help="flat key=value file")
    p.add_argument("--method", dest="methods", type=_method_list, help="comma-separated method ids")
    p.add_argument("--alpha", type=float)
    p.add_argument("--n", dest="sample_sizes", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-count", type=int)
    p.add_argument("--or-s", type=float, help="typical odds ratio of the mixing law")
    p.add_argument("--nodes", type=int, help="Gauss-Legendre nodes per outcome")
    p.add_argument("--wilson-level", choices=("alpha", "half_alpha"))
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("csv", "svg"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="propci", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"propci {__version__} ({'compiled' if COMPILED else 'pure python'} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("interval", help="interval for one sample")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--x", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--wilson-level", choices=("alpha", "half_alpha"), default="alpha")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--clamp", dest="clamp", action="store_true", default=None)
    g.add_argument("--raw", dest="clamp", action="store_false")
    p.set_defaults(func=cmd_interval)

    p = sub.add_parser("table2", help="the two worked samples for eight estimators, as CSV")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("curves", help="error curves over the lambda grid")
    _add_grid_options(p)
    p.add_argument("--regime", choices=ev.REGIMES)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("halfwidths", help="local-average half-widths relative to a reference")
    _add_grid_options(p)
    p.add_argument("--reference", choices=METHODS)
    p.set_defaults(func=cmd_halfwidths)

    p = sub.add_parser("scan", help="largest one-sided error over the grid")
    _add_grid_options(p)
    p.add_argument("--regime", choices=ev.REGIMES)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("validity", help="check a min(x, n - x) > threshold rule for Wald")
    p.add_argument("--threshold", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--or-s", type=float, default=1.2)
    p.add_argument("--method", default="wald", choices=METHODS)
    p.add_argument("--n", dest="sample_sizes", type=_int_list)
    p.set_defaults(func=cmd_validity)

    p = sub.add_parser("properties", help="property matrix plus live checks")
    p.add_argument("--method", action="append", choices=METHODS)
    p.add_argument("--max-n", type=int, default=40)
    p.set_defaults(func=cmd_properties)

    p = sub.add_parser("calibrate", help="location of the logit-normal mixing law")
    p.add_argument("--p0", type=float, required=True)
    p.add_argument("--or-s", type=float, default=1.2)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle", help="quadrature vs seeded Monte-Carlo")
    p.add_argument("--method", default="clopper_pearson_midp", choices=METHODS)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--or-s", type=float, default=1.2)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--random-size", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"propci {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
