"""On-disk formats: dataset CSV, run report JSON and discrepancy trace CSV.

Floats are written with ``repr`` so every value survives a round trip
bit-for-bit, and nothing depends on the locale.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DatasetParseError
from .profiling import Dataset, FitResult
from .splines import collocation


def fmt(x) -> str:
    return repr(float(x))


# -- dataset CSV ------------------------------------------------------------------

def dataset_to_csv(dataset: Dataset) -> str:
    """``#`` comment lines, a ``t,<species...>`` header, then one row per time."""
    lines = [f"#{c}" for c in dataset.comments]
    lines.append(",".join(("t",) + tuple(dataset.species_names)))
    for j, t in enumerate(dataset.times):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in dataset.values[:, j]]))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> Dataset:
    comments, header, rows = [], None, []
    header_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is not None:
                raise DatasetParseError(lineno, "comment lines must precede the header")
            comments.append(raw[raw.index("#") + 1:])
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if cells[0] != "t" or len(cells) < 2 or any(not c for c in cells):
                raise DatasetParseError(lineno, "header must be 't,<species1>[,<species2>...]'")
            if len(set(cells)) != len(cells):
                raise DatasetParseError(lineno, "duplicate column names in header")
            header, header_line = cells, lineno
            continue
        if len(cells) != len(header):
            raise DatasetParseError(lineno, f"expected {len(header)} fields, got {len(cells)}")
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise DatasetParseError(lineno, f"non-numeric field in {line!r}") from None
        if not all(np.isfinite(row)):
            raise DatasetParseError(lineno, "values must be finite")
        if rows and row[0] <= rows[-1][1][0]:
            raise DatasetParseError(lineno, "times must be strictly increasing")
        rows.append((lineno, row))
    if header is None:
        raise DatasetParseError(max(1, len(text.splitlines())), "missing header line")
    if len(rows) < 4:
        raise DatasetParseError(header_line, f"need at least 4 data rows, found {len(rows)}")
    data = np.array([r for _, r in rows])
    return Dataset(data[:, 0], data[:, 1:].T, tuple(header[1:]), tuple(comments))


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


def write_dataset(path, dataset: Dataset) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8", newline="\n")


# -- run report -----------------------------------------------------------------------

def _num(x):
    return None if x is None else float(x)


@dataclass
class RunReport:
    """Everything a fit produced, in a JSON-friendly shape.

    Wall-clock timings are deliberately not part of the report so that
    identical runs produce identical bytes; the CLI writes them separately.
    """

    config: dict
    model: str
    noise: str
    param_names: list
    species_names: list
    iterations: list
    final: dict
    initial_conditions: dict
    counters: dict
    status: str = "complete"
    error: Optional[str] = None
    dataset_comments: list = field(default_factory=list)

    @classmethod
    def from_fit(cls, result: FitResult, config: dict, dataset: Dataset | None = None,
                 status: str = "complete", error: str | None = None) -> "RunReport":
        names = list(result.param_names)
        iterations = []
        for n, r in enumerate(result.records):
            iterations.append({
                "round": n,
                "theta": {k: float(v) for k, v in zip(names, r.theta)},
                "sigma": _num(r.sigma),
                "l_d": _num(r.l_d),
                "l_m": float(r.l_m),
                "penalized": _num(r.penalized),
                "w_d": float(r.weights.w_d),
                "w_m": float(r.weights.w_m),
                "weight_l_d": _num(r.weight_losses[0]),
                "weight_l_m": _num(r.weight_losses[1]),
                "max_abs_xi": float(np.max(np.abs(r.xi))),
                "evals": int(r.evals),
            })
        final = dict(iterations[-1]["theta"]) if iterations else {}
        if iterations:
            final["sigma"] = iterations[-1]["sigma"]
        return cls(
            config=dict(config),
            model=result.model,
            noise=result.noise,
            param_names=names,
            species_names=list(result.species_names),
            iterations=iterations,
            final=final,
            initial_conditions={
                s: float(v) for s, v in zip(result.species_names, result.initial_condition_estimates)
            },
            counters={k: int(v) for k, v in result.counters.items()},
            status=status,
            error=error,
            dataset_comments=list(dataset.comments) if dataset is not None else [],
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def write_report(path, report: RunReport) -> None:
    Path(path).write_text(report.to_json(), encoding="utf-8", newline="\n")


def read_report(path) -> RunReport:
    return RunReport.from_json(Path(path).read_text(encoding="utf-8"))


# -- traces ---------------------------------------------------------------------------------

def trace_to_csv(result: FitResult) -> str:
    """Final splines and discrepancies on the enforcement grid.

    Columns are ``t,f_1..f_S,xi_1..xi_S``.
    """
    grid = result.grid.grid
    S = len(result.splines)
    A = collocation(result.splines[0].basis, grid).A
    F = np.stack([s.coefficients for s in result.splines]) @ A.T
    xi = result.records[-1].xi
    header = ["t"] + [f"f_{s + 1}" for s in range(S)] + [f"xi_{s + 1}" for s in range(S)]
    lines = [",".join(header)]
    for k, t in enumerate(grid):
        lines.append(",".join([fmt(t)] + [fmt(v) for v in F[:, k]] + [fmt(v) for v in xi[:, k]]))
    return "\n".join(lines) + "\n"


def read_table(path) -> tuple[list, np.ndarray]:
    """Header and numeric body of a plain CSV (no comments), shape ``(rows, cols)``."""
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not lines:
        raise DatasetParseError(1, "empty file")
    header = [c.strip() for c in lines[0].split(",")]
    body = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DatasetParseError(lineno, f"expected {len(header)} fields, got {len(cells)}")
        try:
            body.append([float(c) for c in cells])
        except ValueError:
            raise DatasetParseError(lineno, "non-numeric field") from None
    return header, np.array(body, dtype=float).reshape(len(body), len(header))
