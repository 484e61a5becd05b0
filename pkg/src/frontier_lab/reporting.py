"""Canonical experiment configs and deterministic report serialization.

A config hashes to a short identifier computed from its canonical JSON
form; the hash is stamped into every emitted file, and re-running the same
config reproduces every CSV/JSON/SVG byte for byte (no timestamps, fixed
float formatting via ``repr``).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import DataFormatError, DomainError

EXPERIMENTS = (
    "cancellation",
    "attenuation",
    "calibration",
    "nonlinear-frontier",
    "alignment",
    "real-data-frontier",
)

_INT_RE = re.compile(r"^-?\d+$")


def _jsonify(value: Any) -> Any:
    """Coerce numpy scalars/arrays into plain JSON-able Python values."""
    if isinstance(value, Mapping):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """Identity of one experiment run: name, seed, repetitions, parameters.

    The output directory is runtime context, not identity, so it does not
    enter the hash.
    """

    experiment: str
    seed: int = 42
    repetitions: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.repetitions < 0:
            raise DomainError(f"repetitions must be nonnegative, got {self.repetitions}")
        object.__setattr__(self, "params", dict(self.params))

    def canonical_json(self) -> str:
        payload = {
            "experiment": self.experiment,
            "seed": int(self.seed),
            "repetitions": int(self.repetitions),
            "params": _jsonify(self.params),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class Table:
    """One named result table: column names plus uniform-width rows."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise DataFormatError(
                    f"row of width {len(row)} in table with {len(self.columns)} columns"
                )
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class ExperimentReport:
    """Results of one run: tables, summary stats, and acceptance flags."""

    config: ExperimentConfig
    tables: dict[str, Table]
    summary: dict
    pass_flags: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def run_dir_name(self) -> str:
        return f"{self.config.experiment}-{self.config.config_hash()}"

    def write(self, out_root: str | Path, figures: Mapping[str, str] | None = None) -> Path:
        """Serialize under ``out_root/<experiment>-<hash>/``.

        Writes one RFC-4180 CSV per table (with a leading ``# config``
        comment line), ``summary.json``, and optionally pre-rendered SVG
        figures passed as ``{filename_stem: svg_text}``.
        """
        out_dir = Path(out_root) / self.run_dir_name()
        out_dir.mkdir(parents=True, exist_ok=True)
        stamp = f"# config {self.config.config_hash()} {self.config.canonical_json()}\n"
        for name, table in self.tables.items():
            lines = [stamp, ",".join(table.columns) + "\n"]
            for row in table.rows:
                cells = [_quote(_format_cell(v)) for v in row]
                lines.append(",".join(cells) + "\n")
            (out_dir / f"{name}.csv").write_text("".join(lines))
        payload = {
            "config": json.loads(self.config.canonical_json()),
            "config_hash": self.config.config_hash(),
            "summary": _jsonify(self.summary),
            "pass_flags": _jsonify(self.pass_flags),
        }
        (out_dir / "summary.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        for stem, svg_text in (figures or {}).items():
            (out_dir / f"{stem}.svg").write_text(svg_text)
        return out_dir

    @classmethod
    def load(cls, run_dir: str | Path) -> "ExperimentReport":
        """Rehydrate a report (tables + summary) from a run directory."""
        run_dir = Path(run_dir)
        summary_path = run_dir / "summary.json"
        if not summary_path.exists():
            raise DataFormatError(f"no summary.json under {run_dir}")
        payload = json.loads(summary_path.read_text())
        cfg = payload["config"]
        config = ExperimentConfig(
            experiment=cfg["experiment"],
            seed=cfg["seed"],
            repetitions=cfg["repetitions"],
            params=cfg["params"],
        )
        tables: dict[str, Table] = {}
        for csv_path in sorted(run_dir.glob("*.csv")):
            lines = [ln for ln in csv_path.read_text().splitlines() if not ln.startswith("# ")]
            if not lines:
                continue
            columns = tuple(lines[0].split(","))
            rows = tuple(tuple(_parse_cell(c) for c in _split_csv(ln)) for ln in lines[1:])
            tables[csv_path.stem] = Table(columns=columns, rows=rows)
        return cls(
            config=config,
            tables=tables,
            summary=payload.get("summary", {}),
            pass_flags={k: bool(v) for k, v in payload.get("pass_flags", {}).items()},
        )


def _quote(cell: str) -> str:
    if any(ch in cell for ch in (',', '"', "\n")):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def _split_csv(line: str) -> list[str]:
    """Minimal RFC-4180 field splitter (quotes and doubled quotes)."""
    fields: list[str] = []
    buf: list[str] = []
    in_quote = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_quote:
            if ch == '"':
                if i + 1 < len(line) and line[i + 1] == '"':
                    buf.append('"')
                    i += 1
                else:
                    in_quote = False
            else:
                buf.append(ch)
        elif ch == '"':
            in_quote = True
        elif ch == ",":
            fields.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        i += 1
    fields.append("".join(buf))
    return fields
