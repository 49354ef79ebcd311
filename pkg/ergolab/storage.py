"""File persistence for ergolab reports, artifacts and potentials."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .models import CriticalityWitness, IDSTable, PotentialWindow, StepOutcome

FORMAT_VERSION = 1
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.json"
IDS_COLUMNS = ("E", "k_M", "stderr", "M", "samples", "lambda")


class StorageError(RuntimeError):
    """Raised when a report, artifact or potential cannot be read or written."""


class ReportWriter:
    """Write ``results.csv``, ``summary.json`` and named artifacts into one directory."""

    def __init__(self, directory: Path) -> None:
        self.directory = Path(directory)

    def _ensure_directory(self) -> None:
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"Cannot create output directory {self.directory}: {exc}") from exc

    def write_results(self, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        self._ensure_directory()
        path = self.directory / RESULTS_FILE
        try:
            with path.open("w", newline="") as handle:
                handle.write(f"# format_version={FORMAT_VERSION}\n")
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([format_cell(value) for value in row])
        except OSError as exc:
            raise StorageError(f"Failed to write {path}: {exc}") from exc
        logging.debug("wrote %s", path)
        return path

    def write_summary(self, payload: Dict[str, Any]) -> Path:
        return self.write_artifact(SUMMARY_FILE, payload)

    def write_artifact(self, name: str, payload: Dict[str, Any]) -> Path:
        self._ensure_directory()
        path = self.directory / name
        body = {"format_version": FORMAT_VERSION, **payload}
        try:
            path.write_text(json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")
        except (OSError, TypeError) as exc:
            raise StorageError(f"Failed to write {path}: {exc}") from exc
        logging.debug("wrote %s", path)
        return path


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def read_results(path: Path) -> Tuple[List[str], List[List[str]]]:
    """Read a ``results.csv`` back as header and string rows."""

    path = Path(path)
    if not path.exists():
        raise StorageError(f"Results file not found: {path}")
    with path.open(newline="") as handle:
        first = handle.readline().strip()
        if first != f"# format_version={FORMAT_VERSION}":
            raise StorageError(f"Unsupported results format in {path}: {first!r}")
        rows = list(csv.reader(handle))
    if not rows:
        raise StorageError(f"Results file {path} has no header")
    return rows[0], rows[1:]


def ids_rows(table: IDSTable) -> List[List[Any]]:
    return [
        [float(E), float(k), float(err), table.M, table.samples, table.coupling]
        for E, k, err in zip(table.energies, table.values, table.stderr)
    ]


def export_potential(potential: PotentialWindow, path: Path, kind: str = "", seed: Optional[int] = None) -> None:
    kind = kind or str(potential.origin.get("kind", "unknown"))
    seed = potential.origin.get("seed", 0) if seed is None else seed
    lines = [f"# lambda={potential.coupling:.17g} kind={kind} seed={seed}"]
    lines.extend(f"{value:.17g}" for value in potential.values)
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise StorageError(f"Failed to write potential {path}: {exc}") from exc


def import_potential(path: Path) -> PotentialWindow:
    path = Path(path)
    if not path.exists():
        raise StorageError(f"Potential file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise StorageError(f"Potential file {path} lacks a '# lambda=' header")
    header: Dict[str, str] = {}
    for token in lines[0][1:].split():
        key, _, value = token.partition("=")
        header[key] = value
    try:
        coupling = float(header["lambda"])
        values = np.array([float(line) for line in lines[1:] if line.strip()], dtype=float)
    except (KeyError, ValueError) as exc:
        raise StorageError(f"Malformed potential file {path}: {exc}") from exc
    values.setflags(write=False)
    origin: Dict[str, Any] = {"kind": header.get("kind", "unknown"), "seed": int(header.get("seed", "0") or 0)}
    return PotentialWindow(values=values, coupling=coupling, origin=origin)


def read_sampling_table(path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """Two whitespace-separated columns ``x f(x)`` with x ascending in [0, 1)."""

    path = Path(path)
    if not path.exists():
        raise StorageError(f"Sampling table not found: {path}")
    try:
        data = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
    except ValueError as exc:
        raise StorageError(f"Malformed sampling table {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise StorageError(f"Sampling table {path} needs exactly two columns")
    return data[:, 0].copy(), data[:, 1].copy()


def witness_to_dict(witness: CriticalityWitness) -> Dict[str, Any]:
    payload = asdict(witness)
    payload["energies"] = list(witness.energies)
    payload["k"] = list(witness.k)
    payload["badset"] = list(witness.badset)
    return payload


def witness_from_dict(payload: Dict[str, Any]) -> CriticalityWitness:
    try:
        return CriticalityWitness(
            delta=float(payload["delta"]),
            sigma=float(payload["sigma"]),
            L=int(payload["L"]),
            energies=(float(payload["energies"][0]), float(payload["energies"][1])),
            k=tuple(int(v) for v in payload["k"]),
            badset=tuple(int(v) for v in payload["badset"]),
            grid=int(payload.get("grid", 8)),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise StorageError(f"Malformed witness: {exc}") from exc


def outcome_to_dict(outcome: StepOutcome) -> Dict[str, Any]:
    return {
        "variant": outcome.variant,
        "M": outcome.M,
        "delta": outcome.delta,
        "sigma": outcome.sigma,
        "L": outcome.L,
        "coarse": list(outcome.coarse),
        "children": [witness_to_dict(child) for child in outcome.children],
        "eliminated": list(outcome.eliminated),
        "resonance_counts": {str(q): int(n) for q, n in outcome.resonance_counts.items()},
        "Q": outcome.Q,
        "q_bound": outcome.q_bound,
        "diagnostics": outcome.diagnostics,
    }


def outcome_from_dict(payload: Dict[str, Any]) -> StepOutcome:
    try:
        return StepOutcome(
            variant=str(payload["variant"]),
            M=int(payload["M"]),
            delta=float(payload["delta"]),
            sigma=float(payload["sigma"]),
            L=int(payload["L"]),
            coarse=tuple(int(v) for v in payload["coarse"]),
            children=tuple(witness_from_dict(child) for child in payload["children"]),
            eliminated=tuple(int(v) for v in payload["eliminated"]),
            resonance_counts={int(q): int(n) for q, n in payload["resonance_counts"].items()},
            Q=int(payload["Q"]),
            q_bound=float(payload["q_bound"]),
            diagnostics=dict(payload.get("diagnostics", {})),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise StorageError(f"Malformed step outcome: {exc}") from exc


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
