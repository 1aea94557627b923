"""Result bundles (JSON + CSV) and data-file readers for the command line."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from qmle import __version__
from qmle.estimate import CellCounts, QuantizedDataset
from qmle.quantize import QuantizerBank, word_index
from qmle.simulate import ExperimentPlan, MseReport

SCHEMA_VERSION = 1
CSV_COLUMNS = ("estimator", "N", "component", "mse", "mc_se", "excluded", "theory_mse")


class DataError(ValueError):
    pass


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def report_csv(report: MseReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report.rows:
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def estimates_csv(report: MseReport, plan: ExperimentPlan) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["estimator", "N", "run", "converged", *plan.components])
    for (name, n), est in report.estimates.items():
        ok = report.converged[(name, n)]
        for r, (row, flag) in enumerate(zip(est, ok)):
            writer.writerow([name, n, r, int(flag), *(repr(float(x)) for x in row)])
    return buf.getvalue()


def crlb_json(pred) -> dict | None:
    if pred is None:
        return None
    return {"covariance": pred.covariance.tolist(), "condition_number": pred.condition_number}


def bundle_dict(config_echo: dict, plan: ExperimentPlan, report: MseReport) -> dict:
    """Self-contained result bundle; re-running ``config`` reproduces it."""
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "config": config_echo,
        "theta_star": list(plan.theta_star.as_tuple()),
        "base_seed": plan.base_seed,
        "estimators": list(plan.estimators),
        "report": report.rows,
        "crlb": {name: crlb_json(p) for name, p in report.crlb.items()},
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_bundle(out_dir: Path, config_echo: dict, plan: ExperimentPlan, report: MseReport,
                 formats=("csv", "json")) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out_dir / "results.json"
        path.write_text(dumps(bundle_dict(config_echo, plan, report)))
        written.append(path)
    if "csv" in formats:
        path = out_dir / "results.csv"
        path.write_text(report_csv(report))
        written.append(path)
        path = out_dir / "estimates.csv"
        path.write_text(estimates_csv(report, plan))
        written.append(path)
    return written


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc.strerror}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"data file {path} is empty")
    header = [c.strip() for c in rows[0]]
    body = [[c.strip() for c in r] for r in rows[1:]]
    if not body:
        raise DataError(f"data file {path} has a header but no rows")
    if any(len(r) != len(header) for r in body):
        raise DataError(f"ragged rows in {path}")
    return header, body


def read_data(path: Path, banks: tuple[QuantizerBank, ...] | None, n_sensors: int):
    """Parse a data CSV into a QuantizedDataset or an (n, L) array of raw points.

    Accepted headers:
      ``bank,word,count``   -- cell counts, word as a bit string such as ``01``
      ``bank,b1,...,bL``    -- one quantized word per row
      ``y1,...,yL``         -- raw observations
    Bank indices are 1-based positions in the config's bank list.
    """
    header, body = _read_rows(path)
    try:
        if header == ["bank", "word", "count"]:
            counts: dict[int, list[int]] = {}
            for b, word, c in body:
                bits = tuple(int(ch) for ch in word)
                if len(bits) != n_sensors:
                    raise DataError(f"word {word!r} does not have {n_sensors} bits")
                counts.setdefault(int(b), [0] * 2 ** n_sensors)[word_index(bits)] += int(c)
            return _dataset(counts, banks, n_sensors)
        if header == ["bank", *(f"b{i}" for i in range(1, n_sensors + 1))]:
            counts = {}
            for row in body:
                bits = tuple(int(x) for x in row[1:])
                counts.setdefault(int(row[0]), [0] * 2 ** n_sensors)[word_index(bits)] += 1
            return _dataset(counts, banks, n_sensors)
        if header == [f"y{i}" for i in range(1, n_sensors + 1)]:
            ys = np.array([[float(x) for x in r] for r in body])
            if not np.all(np.isfinite(ys)) or np.any(ys <= 0.0):
                raise DataError("raw observations must be finite and positive")
            return ys
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed value in {path}: {exc}") from exc
    raise DataError(f"unrecognized header {','.join(header)!r} in {path}")


def _dataset(counts: dict[int, list[int]], banks, n_sensors) -> QuantizedDataset:
    if banks is None:
        raise DataError("quantized data needs a [banks] section in the config")
    groups = []
    for b in sorted(counts):
        if not 1 <= b <= len(banks):
            raise DataError(f"bank index {b} outside 1..{len(banks)}")
        if any(c < 0 for c in counts[b]):
            raise DataError("counts must be nonnegative")
        groups.append((banks[b - 1], CellCounts(tuple(counts[b]))))
    data = QuantizedDataset(tuple(groups))
    if data.total == 0:
        raise DataError("quantized data contains no observations")
    return data


def finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None
