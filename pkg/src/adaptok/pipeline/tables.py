"""Versioned CSV tables.

Every file starts with ``# schema=<name>/<version>`` and a fixed column
order; readers skip comment lines and check the schema name.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

SCHEMAS = {
    "metrics": (1, ["sample_id", "rmsd_A", "tm", "K", "entropy_mean", "entropy_min", "helix", "sheet", "coil",
                    "length", "token_agreement", "wall_s"]),
    "tokenizer_train": (1, ["step", "flow", "size", "total", "lr", "grad_norm", "heldout_rmsd_A", "heldout_tm"]),
    "ar_train": (1, ["step", "loss", "accuracy", "lr", "grad_norm"]),
    "sweep": (1, ["sample_id", "k", "rmsd_A", "tm"]),
    "sweep_summary": (1, ["k", "n", "rmsd_A_mean", "rmsd_A_sd", "tm_mean", "tm_sd"]),
    "entropy": (1, ["step", "entropy", "token"]),
    "shrink": (1, ["sample_id", "fraction", "length", "target_length", "tm_to_original", "helix", "sheet", "coil"]),
    "probe": (1, ["features", "model", "dim", "train_n", "test_n", "accuracy", "chance"]),
    "search": (1, ["step", "rank", "length", "logp", "reward", "score", "done"]),
}


@dataclass
class MetricsRow:
    sample_id: str
    rmsd_A: float = math.nan
    tm: float = math.nan
    K: int = 0
    entropy_mean: float = math.nan
    entropy_min: float = math.nan
    helix: float = math.nan
    sheet: float = math.nan
    coil: float = math.nan
    length: int = 0
    token_agreement: float = math.nan
    wall_s: float = math.nan


assert [f.name for f in fields(MetricsRow)] == SCHEMAS["metrics"][1]


def _cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    if isinstance(v, bool):
        return int(v)
    return v


def write_table(path, schema: str, rows) -> Path:
    version, cols = SCHEMAS[schema]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(f"# schema={schema}/{version}\n")
        w = csv.writer(f)
        w.writerow(cols)
        for r in rows:
            d = asdict(r) if hasattr(r, "__dataclass_fields__") else r
            missing = [c for c in cols if c not in d]
            if missing:
                raise KeyError(f"{schema} row missing columns {missing}")
            w.writerow([_cell(d[c]) for c in cols])
    return path


def read_table(path, schema: str | None = None) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as f:
        head = f.readline().strip()
        if not head.startswith("# schema="):
            raise ValueError(f"{path}:1: missing schema line")
        name, _, version = head[len("# schema="):].partition("/")
        if schema is not None and name != schema:
            raise ValueError(f"{path}:1: expected schema {schema!r}, found {name!r}")
        if name in SCHEMAS and int(version) > SCHEMAS[name][0]:
            raise ValueError(f"{path}:1: schema version {version} is newer than supported")
        rows = []
        for r in csv.DictReader(line for line in f if not line.startswith("#")):
            rows.append({k: _parse(v) for k, v in r.items()})
    return rows


def _parse(v: str):
    try:
        i = int(v)
        return i
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v
