"""Command-line front end.

    genprofile simulate --model newton --theta 0.05,20 --initial 180 --sigma 8 --seed 1 --out data.csv
    genprofile fit --model newton --data data.csv --out run/ --plot
    genprofile interp --data data.csv --out interp/
    genprofile plot --trace run/trace.csv --data data.csv --out run/

Settings may also come from a JSON file given with ``--config``; flags on
the command line win. Exit status is 0 on success, 1 when a fit or other
computation fails (a partial report is still written) and 2 for usage or
input errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import formats, svg
from .errors import DatasetParseError, DomainError, FitError, InvalidGridError, InvalidModelError, ProfilingError
from .models import get_model
from .noise import GAUSSIAN, KINDS, NoiseModel
from .numerics import OptimizerOptions
from .profiling import DEFAULT_K, Dataset, FitConfig, GridConfig, fit
from .splines import collocation, interpolate, make_basis
from .synthetic import simulate_dataset

log = logging.getLogger("genprofile")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: Optional[str] = None
    noise: str = GAUSSIAN
    theta: Optional[list] = None
    initial: Optional[list] = None
    sigma: Optional[float] = None
    times: Optional[list] = None
    data: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    iterations: int = 10
    grid_k: Optional[int] = None
    theta0: Optional[list] = None
    restarts: int = 1
    max_evals: int = 10_000
    trace: Optional[str] = None
    plot: bool = False


# -- argument handling ----------------------------------------------------------

def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _times(text: str) -> list:
    """``start:stop:step`` (stop included) or a comma-separated list."""
    if ":" in text:
        try:
            start, stop, step = (float(v) for v in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
        if step <= 0 or stop <= start:
            raise argparse.ArgumentTypeError("need step > 0 and stop > start")
        n = int(round((stop - start) / step))
        return [start + i * step for i in range(n + 1)]
    return _floats(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genprofile", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        # defaults are None so that config-file values are only overridden by explicit flags
        sp.add_argument("--config", help="JSON file with default settings")
        sp.add_argument("--model")
        sp.add_argument("--noise", choices=KINDS)
        sp.add_argument("--data", help="dataset CSV")
        sp.add_argument("--out", help="output directory (simulate: CSV path or directory)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--plot", action="store_const", const=True, default=None, help="also write SVG plots")

    s = sub.add_parser("simulate", help="sample a synthetic dataset")
    common(s)
    s.add_argument("--theta", type=_floats, help="true ODE parameters, comma separated")
    s.add_argument("--initial", type=_floats, help="true initial state, comma separated")
    s.add_argument("--sigma", type=float, help="noise scale")
    s.add_argument("--times", type=_times, help="start:stop:step or t1,t2,...")

    f = sub.add_parser("fit", help="estimate parameters from a dataset")
    common(f)
    f.add_argument("--iterations", type=int)
    f.add_argument("--grid-k", dest="grid_k", type=int, help="enforcement grid size K")
    f.add_argument("--theta0", type=_floats, help="starting ODE parameters")
    f.add_argument("--restarts", type=int)
    f.add_argument("--max-evals", dest="max_evals", type=int)

    i = sub.add_parser("interp", help="sample the interpolating spline and its derivative")
    common(i)
    i.add_argument("--grid-k", dest="grid_k", type=int, help="number of sample points")

    pl = sub.add_parser("plot", help="render SVG panels from a trace file")
    common(pl)
    pl.add_argument("--trace", help="trace CSV written by fit")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(values, dict):
            raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if isinstance(values.get("times"), str):
        values["times"] = _times(values["times"])
    cfg = RunConfig(**values)
    if cfg.noise not in KINDS:
        raise UsageError(f"unknown noise kind {cfg.noise!r}")
    return cfg


def _need(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required setting(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _outdir(cfg: RunConfig) -> Path:
    _need(cfg, "out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model(cfg: RunConfig):
    _need(cfg, "model")
    try:
        return get_model(cfg.model)
    except InvalidModelError as exc:
        raise UsageError(str(exc)) from None


def _read(path) -> Dataset:
    if not Path(path).is_file():
        raise UsageError(f"no such file: {path}")
    try:
        return formats.read_dataset(path)
    except DatasetParseError:
        raise
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def default_grid_k(times) -> int:
    """1001 for uniformly spaced data, one point per unit time for irregular integer times."""
    t = np.asarray(times, dtype=float)
    gaps = np.diff(t)
    integral = np.all(t == np.round(t))
    if integral and not np.allclose(gaps, gaps[0]):
        return max(int(t[-1] - t[0]) + 1, t.size)
    return DEFAULT_K


# -- commands ----------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    model = _model(cfg)
    _need(cfg, "theta", "initial", "sigma")
    if len(cfg.theta) != model.n_params:
        raise UsageError(f"model {model.name} takes {model.n_params} parameters, got {len(cfg.theta)}")
    if len(cfg.initial) != model.dimension:
        raise UsageError(f"model {model.name} has {model.dimension} species, got {len(cfg.initial)} initial values")
    try:
        noise = NoiseModel(cfg.noise, cfg.sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    times = cfg.times if cfg.times is not None else _times("0:100:10")
    comments = (
        " generated by genprofile simulate",
        f" model={model.name}",
        f" noise={noise.kind}",
        f" theta={','.join(formats.fmt(v) for v in cfg.theta)}",
        f" initial={','.join(formats.fmt(v) for v in cfg.initial)}",
        f" sigma={formats.fmt(noise.sigma)}",
        f" seed={cfg.seed}",
    )
    try:
        ds = simulate_dataset(model, cfg.theta, cfg.initial, noise.sigma, times, noise.kind, cfg.seed, comments)
    except (DomainError, InvalidGridError) as exc:
        raise UsageError(str(exc)) from None
    _need(cfg, "out")
    path = Path(cfg.out)
    if path.suffix.lower() != ".csv":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "data.csv"
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    formats.write_dataset(path, ds)
    log.info("wrote %s", path)
    return EXIT_OK


def _fit_config(cfg: RunConfig, ds: Dataset) -> FitConfig:
    K = cfg.grid_k if cfg.grid_k is not None else default_grid_k(ds.times)
    if K < ds.n_obs:
        raise UsageError(f"--grid-k must be at least the number of observations ({ds.n_obs})")
    if cfg.iterations < 1:
        raise UsageError("--iterations must be at least 1")
    return FitConfig(
        iterations=cfg.iterations,
        grid=GridConfig.uniform(ds.times[0], ds.times[-1], K),
        K=K,
        optimizer=OptimizerOptions(max_evals=cfg.max_evals),
        theta0=cfg.theta0,
        noise=cfg.noise,
        restarts=cfg.restarts,
    )


def cmd_fit(cfg: RunConfig) -> int:
    model = _model(cfg)
    _need(cfg, "data")
    ds = _read(cfg.data)
    if ds.n_species != model.dimension:
        raise UsageError(
            f"species count mismatch: dataset has {ds.n_species} species "
            f"({', '.join(ds.species_names)}), model {model.name} expects {model.dimension}"
        )
    if cfg.theta0 is not None and len(cfg.theta0) != model.n_params:
        raise UsageError(f"--theta0 needs {model.n_params} values")
    fc = _fit_config(cfg, ds)
    out = _outdir(cfg)
    echo = asdict(cfg)
    echo["grid_k"] = fc.K
    start = time.perf_counter()
    status, code = "complete", EXIT_OK
    try:
        result = fit(ds, model, cfg.noise, fc)
        error = None
    except FitError as exc:
        result, status, code, error = exc.partial, "aborted", EXIT_FAIL, str(exc)
        log.error("%s", exc)
    elapsed = time.perf_counter() - start
    report = formats.RunReport.from_fit(result, echo, ds, status=status, error=error)
    formats.write_report(out / "report.json", report)
    (out / "trace.csv").write_text(formats.trace_to_csv(result), encoding="utf-8", newline="\n")
    (out / "timings.json").write_text(json.dumps({"fit_seconds": elapsed}, indent=2) + "\n", encoding="utf-8")
    if cfg.plot:
        _plot_files(out / "trace.csv", ds, out / "fit.svg")
    if code == EXIT_OK:
        summary = ", ".join(f"{k}={v:.6g}" for k, v in report.final.items() if v is not None)
        print(f"{model.name}: {summary}")
    return code


def cmd_interp(cfg: RunConfig) -> int:
    _need(cfg, "data")
    ds = _read(cfg.data)
    out = _outdir(cfg)
    n = cfg.grid_k if cfg.grid_k is not None else DEFAULT_K
    if n < 2:
        raise UsageError("--grid-k must be at least 2")
    basis = make_basis(ds.times)
    splines = [interpolate(ds.times, y, basis) for y in ds.values]
    t = np.linspace(ds.times[0], ds.times[-1], n)
    m = collocation(basis, t)
    C = np.stack([s.coefficients for s in splines])
    F, dF = C @ m.A.T, C @ m.A_prime.T
    S = ds.n_species
    header = ["t"] + [f"f_{s + 1}" for s in range(S)] + [f"df_{s + 1}" for s in range(S)]
    lines = [",".join(header)]
    for k in range(n):
        lines.append(",".join([formats.fmt(t[k])] + [formats.fmt(v) for v in F[:, k]]
                              + [formats.fmt(v) for v in dF[:, k]]))
    (out / "interp.csv").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    if cfg.plot:
        panels = [
            ("interpolant", _data_series(ds) + [svg.Series(f"f_{s + 1}", t, F[s]) for s in range(S)]),
            ("derivative", [svg.Series(f"df_{s + 1}", t, dF[s]) for s in range(S)]),
        ]
        (out / "interp.svg").write_text(svg.render(panels), encoding="utf-8", newline="\n")
    return EXIT_OK


def _data_series(ds: Optional[Dataset]) -> list:
    if ds is None:
        return []
    return [svg.Series(f"data_{s + 1}", ds.times, ds.values[s], kind="points") for s in range(ds.n_species)]


def _plot_files(trace_path, ds: Optional[Dataset], target: Path) -> None:
    header, body = formats.read_table(trace_path)
    f_cols = [i for i, h in enumerate(header) if h.startswith("f_")]
    xi_cols = [i for i, h in enumerate(header) if h.startswith("xi_")]
    if not header or header[0] != "t" or not f_cols or len(f_cols) != len(xi_cols):
        raise UsageError(f"{trace_path}: expected columns t,f_1..f_S,xi_1..xi_S, got {','.join(header)}")
    if body.shape[0] == 0:
        raise UsageError(f"{trace_path}: trace has no rows")
    if ds is not None and ds.n_species != len(f_cols):
        raise UsageError(f"dataset has {ds.n_species} species, trace has {len(f_cols)}")
    t = body[:, 0]
    panels = [
        ("splines", _data_series(ds) + [svg.Series(header[i], t, body[:, i]) for i in f_cols]),
        ("discrepancy", [svg.Series(header[i], t, body[:, i]) for i in xi_cols]),
    ]
    target.write_text(svg.render(panels), encoding="utf-8", newline="\n")


def cmd_plot(cfg: RunConfig) -> int:
    _need(cfg, "trace")
    if not Path(cfg.trace).is_file():
        raise UsageError(f"no such file: {cfg.trace}")
    ds = _read(cfg.data) if cfg.data else None
    out = _outdir(cfg)
    _plot_files(cfg.trace, ds, out / "fit.svg")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "interp": cmd_interp, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, DatasetParseError) as exc:
        print(f"genprofile {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ProfilingError, ValueError, OSError) as exc:
        print(f"genprofile {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
