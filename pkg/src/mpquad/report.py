"""Serialization of models and experiment reports.

Floats are written with ``repr``, the shortest text that parses back to the
same double, so every emitted number round-trips exactly. Output files are
staged in memory and moved into place only after everything has been computed.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .moments import Var1Model
from .strategies import SimulationReport, ecdf

__all__ = [
    "fmt",
    "model_to_dict",
    "model_from_dict",
    "dumps_json",
    "samples_csv",
    "ecdf_csv",
    "read_samples_csv",
    "OutputStager",
]


def fmt(x: float) -> str:
    return repr(float(x))


def model_to_dict(model: Var1Model) -> dict:
    return {
        "name": model.name,
        "nu": model.nu.tolist(),
        "phi": model.phi.tolist(),
        "sigma_eps": model.sigma_eps.tolist(),
        "selector": model.selector.astype(int).tolist(),
    }


def model_from_dict(d: dict) -> Var1Model:
    try:
        nu, phi, sigma = d["nu"], d["phi"], d["sigma_eps"]
    except KeyError as exc:
        raise ValueError(f"model is missing field {exc.args[0]!r}") from None
    if "selector" in d:
        return Var1Model(nu, phi, sigma, d["selector"], name=d.get("name", ""))
    return Var1Model.with_leading_assets(nu, phi, sigma, int(d.get("n_assets", len(nu))), name=d.get("name", ""))


def dumps_json(obj) -> str:
    # json uses repr for floats, which is round-trip exact
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def samples_csv(samples: dict[str, np.ndarray]) -> str:
    names = list(samples)
    lines = ["repetition," + ",".join(names)]
    n = len(next(iter(samples.values())))
    cols = [np.asarray(samples[k]) for k in names]
    for i in range(n):
        lines.append(f"{i}," + ",".join(fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def ecdf_csv(samples) -> str:
    lines = ["value,cum_prob"]
    lines += [f"{fmt(v)},{fmt(p)}" for v, p in ecdf(samples)]
    return "\n".join(lines) + "\n"


def read_samples_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a ``repetition,<strategy>...`` file back into per-strategy arrays."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2:
        raise ValueError(f"{path}, line 1: expected a repetition column and at least one sample column")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[1:]])
        except ValueError:
            raise ValueError(f"{path}, line {lineno}: non-numeric value") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    return {name: data[:, j] for j, name in enumerate(header[1:])}


def report_files(report: SimulationReport, prefix: str) -> dict[str, str]:
    """Text of the JSON report, the samples CSV and one ECDF CSV per strategy."""
    files = {}
    doc = report.to_dict()
    for name in report.results:
        doc["per_strategy"][name]["samples_file"] = f"{prefix}samples.csv"
        doc["per_strategy"][name]["ecdf_file"] = f"{prefix}ecdf_{name}.csv"
        files[f"{prefix}ecdf_{name}.csv"] = ecdf_csv(report.results[name].samples)
    files[f"{prefix}report.json"] = dumps_json(doc)
    files[f"{prefix}samples.csv"] = samples_csv({k: r.samples for k, r in report.results.items()})
    return files


class OutputStager:
    """Collect output files and write them only on :meth:`commit`.

    Each file goes to a temporary sibling first and is renamed into place, so
    a failure before ``commit`` leaves the output directory untouched.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.files: dict[str, str] = {}

    def add(self, relpath: str, text: str) -> None:
        self.files[relpath] = text

    def commit(self) -> list[Path]:
        written = []
        temps = []
        try:
            for rel, text in self.files.items():
                target = self.root / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                temps.append((tmp, target))
            for tmp, target in temps:
                os.replace(tmp, target)
                written.append(target)
        except BaseException:
            for tmp, _ in temps:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            raise
        return written


def write_text_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    stager = OutputStager(path.parent)
    stager.add(path.name, text)
    stager.commit()
