"""Result containers with deterministic text serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .. import __version__


@dataclass(frozen=True)
class Rate:
    """Binomial rate with a Wilson score interval."""

    successes: int
    trials: int
    lo: float
    hi: float

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def sigma(self) -> float:
        p = self.rate
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)


def wilson(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def binomial_rate(successes: int, trials: int, z: float = 1.959963984540054) -> Rate:
    lo, hi = wilson(int(successes), int(trials), z)
    return Rate(int(successes), int(trials), lo, hi)


def within_binomial(successes: int, trials: int, p: float, n_sigma: float = 3.0) -> bool:
    """Whether ``p`` lies in the ``n_sigma`` Wilson interval of the observed count."""
    lo, hi = wilson(successes, trials, n_sigma)
    return lo <= p <= hi


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    below: int = 0
    above: int = 0

    @classmethod
    def of(cls, values: np.ndarray, edges: np.ndarray) -> "Histogram":
        counts, _ = np.histogram(values, bins=edges)
        return cls(np.asarray(edges, dtype=float), counts,
                   int(np.sum(values < edges[0])), int(np.sum(values > edges[-1])))

    def to_dict(self) -> dict[str, Any]:
        return {"edges": self.edges.tolist(), "counts": self.counts.tolist(),
                "below": self.below, "above": self.above}


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _plain(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


@dataclass
class TrialLedger:
    """Rows of per-sweep-point results plus histograms and a summary."""

    kind: str
    meta: dict[str, Any]
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    histograms: dict[str, Histogram] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, **row: Any) -> None:
        missing = [c for c in self.columns if c not in row]
        if missing:
            raise KeyError(f"row lacks columns {missing}")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def where(self, **match: Any) -> list[dict[str, Any]]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def header_line(self) -> str:
        m = self.meta
        return (f"isacdet {__version__} kind={self.kind} config={m.get('config_hash', '-')} "
                f"seed={m.get('seed', '-')} trials={m.get('trials', '-')} mode={m.get('mode', '-')}")

    def to_csv(self, columns: list[str] | None = None, rows: list[dict[str, Any]] | None = None) -> str:
        cols = columns or self.columns
        buf = io.StringIO()
        buf.write(f"# {self.header_line()}\n")
        for note in self.meta.get("notes", []):
            buf.write(f"# {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows if rows is not None else self.rows:
            w.writerow([_cell(r[c]) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "header": self.header_line(),
            "meta": _plain(self.meta),
            "summary": _plain(self.summary),
            "columns": list(self.columns),
            "rows": _plain(self.rows),
            "histograms": {k: h.to_dict() for k, h in sorted(self.histograms.items())},
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    def schema(self) -> str:
        """Sidecar describing the CSV columns."""
        desc = self.meta.get("column_doc", {})
        lines = [f"# {self.header_line()}", "column,description"]
        lines += [f"{c},{desc.get(c, '')}" for c in self.columns]
        return "\n".join(lines) + "\n"

    def save(self, out_dir: str | Path, stem: str) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            out / f"{stem}.csv": self.to_csv(),
            out / f"{stem}.schema.csv": self.schema(),
            out / f"{stem}.summary.json": self.to_json(),
        }
        for path, text in files.items():
            path.write_text(text)
        written = list(files)
        for name, arr in sorted(self.raw.items()):
            p = out / f"{stem}.raw_{name}.npy"
            np.save(p, arr)
            written.append(p)
        return written
