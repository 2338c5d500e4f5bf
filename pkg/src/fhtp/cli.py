"""
Command-line drivers.

``fhtp convergence``   differences ``||e_{h/2} - e_h||`` per mesh width and parameter point
``fhtp interpolate``   sparse-grid interpolation errors per ``(h, q)``
``fhtp probability``   hitting probabilities from the solver and from Monte Carlo
``fhtp plot``          log-log SVG of a CSV written by the commands above
``fhtp selftest``      quick built-in checks

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .fem import AssemblyError, CoeffGrid, Mesh, xnorm
from .geometry import TransformedProblem
from .models import instantiate, physical_params
from .oracles import MCConfig, mc_first_hit, sde_equivalent
from .pipeline import SolverSettings, norm_system, solve_remainder, xdiff
from .refsol import SeriesConvergenceError, eval_u_const
from .sparsegrid import EvaluatorError, build_interpolant, eval_interpolant

logger = logging.getLogger("fhtp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONVERGENCE_HEADER = ["model", "rho", "h", "err_xnorm"]
INTERPOLATION_HEADER = ["model", "h", "q", "points", "max_err"]
NUMERICAL_ERRORS = (AssemblyError, SeriesConvergenceError, EvaluatorError, RuntimeError, FloatingPointError, ArithmeticError)


class NumericalFailure(RuntimeError):
    pass


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def fmt_rho(rho) -> str:
    return ";".join(fmt(r) for r in rho)


# ---------------------------------------------------------------- helpers


def _mapper(threads: int) -> Callable:
    if threads <= 1:
        return lambda f, xs: list(map(f, xs))

    def pmap(f, xs):
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(f, xs))

    return pmap


def _settings(cfg: RunConfig) -> SolverSettings:
    return SolverSettings(cg_tol=cfg.cg_tol)


def _instantiate(cfg: RunConfig, rho) -> tuple[TransformedProblem, object]:
    tr, ref = instantiate(cfg.family(), rho, cfg.convention, cfg.ode_tol, cfg.spectral_tol)
    if cfg.sanity_constant_drift:
        v0 = tr.v0
        tr = replace(tr, v=lambda t, x: v0 + 0.0 * np.asarray(x, float) * np.asarray(t, float),
                     dv_dx=lambda t, x: 0.0 * np.asarray(x, float) * np.asarray(t, float))
    return tr, ref


def _mesh_n(h: float) -> int:
    return int(round(1.0 / h))


def _write_csv(path: Path, header: list[str], rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text(), encoding="utf-8")
    return out


def _collect(pmap, func, items) -> tuple[list, BaseException | None]:
    """Results in input order; stops at the first failure and returns it."""
    results, error = [], None

    def guarded(item):
        try:
            return func(item), None
        except NUMERICAL_ERRORS as exc:
            return None, exc

    for res, exc in pmap(guarded, items):
        if exc is not None:
            error = exc
            break
        results.append(res)
    return results, error


# ------------------------------------------------------------ convergence


def convergence_rows(cfg: RunConfig, pmap=None) -> tuple[list[list[str]], BaseException | None]:
    pmap = pmap or _mapper(cfg.threads)
    m = cfg.family()
    hs = sorted(cfg.h, reverse=True)
    ns = sorted({_mesh_n(h) for h in hs} | {2 * _mesh_n(h) for h in hs})
    settings = _settings(cfg)

    def point(rho):
        tr, ref = _instantiate(cfg, rho)
        sols = {n: solve_remainder(tr, ref, n, settings) for n in ns}
        return [xdiff(sols[2 * _mesh_n(h)], sols[_mesh_n(h)], norm_system(tr, 2 * _mesh_n(h), settings)) for h in hs]

    pts = cfg.test_points()
    results, error = _collect(pmap, point, pts)
    rows = []
    for rho, errs in zip(pts, results):
        rows += [[m.name, fmt_rho(rho), fmt(h), fmt(e)] for h, e in zip(hs, errs)]
    if results and error is None:
        worst = np.max(np.array(results), axis=0)
        rows += [[m.name, "max", fmt(h), fmt(e)] for h, e in zip(hs, worst)]
    return rows, error


def cmd_convergence(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    rows, error = convergence_rows(cfg)
    path = out / f"convergence_{cfg.model}.csv"
    if error is not None:
        rows.append([cfg.model, "FAILED", "nan", "nan"])
    _write_csv(path, CONVERGENCE_HEADER, rows)
    if error is not None:
        raise NumericalFailure(str(error)) from error
    return path


# ------------------------------------------------------------ interpolation


def interpolation_rows(cfg: RunConfig, save_dir: Path | None = None, pmap=None):
    pmap = pmap or _mapper(cfg.threads)
    m = cfg.family()
    settings = _settings(cfg)
    qs = sorted(cfg.q)
    if not qs:
        raise ConfigError("interpolate needs a non-empty q list")
    rows, error = [], None
    for h in sorted(cfg.h, reverse=True):
        n = _mesh_n(h)
        cache: dict[tuple, np.ndarray] = {}

        def evaluator(rho, n=n, cache=cache):
            key = tuple(float(r) for r in rho)
            if key not in cache:
                tr, ref = _instantiate(cfg, key)
                cache[key] = solve_remainder(tr, ref, n, settings).values
            return cache[key]

        interps = []
        try:
            for q in qs:
                si = build_interpolant(m.N, q, evaluator, map_fn=pmap)
                interps.append(si)
                if save_dir is not None:
                    (save_dir / f"interpolant_{m.name}_n{n}_q{q}.json").write_text(si.to_json(), encoding="utf-8")
        except NUMERICAL_ERRORS as exc:
            error = exc
            break

        def point_errors(rho, n=n, interps=interps):
            tr, ref = _instantiate(cfg, rho)
            e = solve_remainder(tr, ref, n, settings)
            ns = norm_system(tr, n, settings)
            return [xnorm(e - CoeffGrid(eval_interpolant(si, rho), Mesh(n)), ns) for si in interps]

        results, error = _collect(pmap, point_errors, cfg.test_points())
        if error is not None:
            break
        worst = np.max(np.array(results), axis=0)
        rows += [[m.name, fmt(h), str(q), str(si.n_points), fmt(err)] for q, si, err in zip(qs, interps, worst)]
    return rows, error


def cmd_interpolate(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    rows, error = interpolation_rows(cfg, save_dir=out)
    path = out / f"interpolation_{cfg.model}.csv"
    if error is not None:
        rows.append([cfg.model, "FAILED", "nan", "nan", "nan"])
    _write_csv(path, INTERPOLATION_HEADER, rows)
    if error is not None:
        raise NumericalFailure(str(error)) from error
    return path


# ------------------------------------------------------------ probability


def probability_header(N: int) -> list[str]:
    return [f"rho_{k + 1}" for k in range(N)] + ["y", "p_mrm", "p_mc", "mc_se"]


def probability_rows(cfg: RunConfig, pmap=None):
    pmap = pmap or _mapper(cfg.threads)
    if not cfg.y:
        raise ConfigError("probability needs a non-empty y list")
    m = cfg.family()
    n = _mesh_n(min(cfg.h))
    settings = _settings(cfg)
    pts = cfg.test_points()
    for rho in pts:
        p = m.problem(physical_params(m, rho))
        a0, b0 = float(p.alpha(0.0)), float(p.beta(0.0))
        for y in cfg.y:
            if not a0 <= y <= b0:
                raise ConfigError(f"y={y} outside the initial interval [{a0}, {b0}] at rho={rho}")
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(pts) * len(cfg.y))

    def point(item):
        idx, rho = item
        p = m.problem(physical_params(m, rho))
        a0, b0 = float(p.alpha(0.0)), float(p.beta(0.0))
        tr, ref = _instantiate(cfg, rho)
        e = solve_remainder(tr, ref, n, settings)
        proc = sde_equivalent(p, cfg.convention)
        out = []
        for j, y in enumerate(cfg.y):
            xs = (y - a0) / (b0 - a0)
            p_mrm = float(e(1.0, xs) + eval_u_const(ref, tr.T, xs))
            seed = int(seeds[idx * len(cfg.y) + j].generate_state(1, np.uint64)[0])
            p_mc, se = mc_first_hit(proc, y, MCConfig(cfg.mc_paths, cfg.mc_dt, seed, cfg.mc_bridge))
            out.append([*(fmt(r) for r in rho), fmt(y), fmt(p_mrm), fmt(p_mc), fmt(se)])
        return out

    results, error = _collect(pmap, point, list(enumerate(pts)))
    return [r for block in results for r in block], error


def cmd_probability(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    rows, error = probability_rows(cfg)
    N = cfg.family().N
    path = out / f"probability_{cfg.model}.csv"
    if error is not None:
        rows.append(["FAILED"] + ["nan"] * (N + 3))
    _write_csv(path, probability_header(N), rows)
    if error is not None:
        raise NumericalFailure(str(error)) from error
    return path


# ------------------------------------------------------------------ plot


class PlotInputError(ValueError):
    pass


def slope_guide(x0: float, y0: float, xs, slope: float) -> np.ndarray:
    """Power law ``y0 (x / x0)^slope`` through the anchor ``(x0, y0)``."""
    return y0 * (np.asarray(xs, float) / x0) ** slope


def _read_series(path: Path, kind: str | None):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PlotInputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise PlotInputError("empty CSV")
    header, data = rows[0], [r for r in rows[1:] if r]
    if kind is None:
        kind = {tuple(CONVERGENCE_HEADER): "convergence", tuple(INTERPOLATION_HEADER): "interpolation"}.get(tuple(header))
    if kind == "convergence" and header == CONVERGENCE_HEADER:
        data = [r for r in data if r[1] != "FAILED"]
        maxrows = [r for r in data if r[1] == "max"] or data
        worst: dict[float, float] = {}
        for r in maxrows:
            h, e = float(r[2]), float(r[3])
            worst[h] = max(worst.get(h, 0.0), e)
        series = {"max over parameters": sorted(worst.items())}
        return kind, series, ("h", "error"), 1.0
    if kind == "interpolation" and header == INTERPOLATION_HEADER:
        series: dict[str, list] = {}
        for r in data:
            if r[1] == "FAILED":
                continue
            series.setdefault(f"h = {r[1]}", []).append((float(r[3]), float(r[4])))
        return kind, {k: sorted(v) for k, v in series.items()}, ("sparse-grid points", "max error"), -1.0
    raise PlotInputError(f"{path} is not a {kind or 'known'} CSV (header {header})")


def cmd_plot(csv_path: Path, kind: str | None, out_dir: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        kind, series, labels, slope = _read_series(Path(csv_path), kind)
    except (ValueError, IndexError) as exc:
        raise PlotInputError(str(exc)) from None
    series = {k: [(x, y) for x, y in v if x > 0 and y > 0 and np.isfinite(y)] for k, v in series.items()}
    series = {k: v for k, v in series.items() if v}
    if not series:
        raise PlotInputError("no positive data to plot")
    plt.rcParams["svg.hashsalt"] = "fhtp"
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for name, pts in series.items():
        x, y = np.array(pts).T
        ax.loglog(x, y, "o-", label=name)
    x0, y0 = next(iter(series.values()))[0]
    allx = np.array([x for v in series.values() for x, _ in v])
    gx = np.array([allx.min(), allx.max()])
    ax.loglog(gx, slope_guide(x0, y0, gx, slope), "k--", lw=0.8, label=f"slope {slope:g}")
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.legend()
    fig.tight_layout()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / (Path(csv_path).stem + ".svg")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# -------------------------------------------------------------- selftest


def cmd_selftest(stream=None) -> bool:
    from .selftest import run_checks

    return run_checks(stream or sys.stdout)


# ------------------------------------------------------------------ main


def _load_config(args) -> RunConfig:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
    else:
        cfg = parse_config("")
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.threads = args.threads
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--threads", metavar="K", type=int, help="worker threads for parameter points")
    common.add_argument("--seed", metavar="U64", type=int, help="Monte Carlo seed (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fhtp", description="First-hitting-time probabilities by space-time minimal residual solves.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("convergence", parents=[common], help="mesh convergence study")
    sub.add_parser("interpolate", parents=[common], help="sparse-grid interpolation study")
    sub.add_parser("probability", parents=[common], help="hitting probabilities vs Monte Carlo")
    sub.add_parser("selftest", parents=[common], help="run built-in checks")
    p = sub.add_parser("plot", help="log-log SVG from a CSV")
    p.add_argument("csv", help="CSV written by convergence or interpolate")
    p.add_argument("--kind", choices=["convergence", "interpolation"])
    p.add_argument("--out", metavar="DIR", default=".")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            print(cmd_plot(Path(args.csv), args.kind, Path(args.out)))
            return EXIT_OK
        cfg = _load_config(args)
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest() else EXIT_NUMERIC
        cmd = {"convergence": cmd_convergence, "interpolate": cmd_interpolate, "probability": cmd_probability}[args.command]
        print(cmd(cfg))
        return EXIT_OK
    except (ConfigError, PlotInputError) as exc:
        print(f"fhtp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"fhtp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NUMERICAL_ERRORS as exc:
        print(f"fhtp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
