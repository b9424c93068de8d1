"""
File formats: exponent matrices, TS databases, estimate reports, CSV tables
and run manifests.

Every write goes through atomic_write so an interrupted run never leaves a
truncated file behind.
"""
import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from qcts import __version__
from qcts.errors import IntegrityError, UsageError
from qcts.models import ExponentMatrix, SupportVector
from qcts.qc_core import matrix_digest, parse_exponent_matrix, serialize_exponent_matrix, syndrome_indices
from qcts.search_models import DatabaseHeader, LiftMeta, TsDatabase
from qcts.transforms import canonical_indices
from qcts.ts_search import make_record
from qcts.weighing_models import PfEstimate

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DB_MAGIC = "#qcts"
DB_VERSION = "v1"
META_PREFIX = "#meta "


@contextmanager
def atomic_write(path: PathLike):
    """
    Open a temporary file next to ``path`` for text writing; rename it over
    ``path`` when the block succeeds, remove it when the block fails.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    handle = os.fdopen(fd, "w", encoding="ascii", newline="\n")
    try:
        yield handle
        handle.flush()
        os.fsync(handle.fileno())
        handle.close()
        os.replace(tmp_name, target)
    except Exception as e:
        handle.close()
        os.unlink(tmp_name)
        logger.error(f"Write of {target} abandoned: {e}")
        raise


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="ascii")
    except FileNotFoundError:
        raise UsageError(f"Input file not found: {path}")
    except UnicodeDecodeError as e:
        raise IntegrityError(f"{path} is not ASCII text: {e}")


def read_matrix(path: PathLike) -> ExponentMatrix:
    return parse_exponent_matrix(_read_text(path))


def write_matrix(path: PathLike, E: ExponentMatrix) -> None:
    with atomic_write(path) as handle:
        handle.write(serialize_exponent_matrix(E))
    logger.info(f"Wrote {E.rows}x{E.cols} exponent matrix with z={E.z} to {path}")


def _d2_to_json(d2: float) -> Union[float, str]:
    return d2 if math.isfinite(d2) else "inf"


def _record_line(record) -> str:
    payload: Dict[str, Any] = {
        "supp": list(record.support.support),
        "w": record.w,
        "v": record.v,
        "flags": list(record.flags),
    }
    if record.d2 is not None:
        payload["d2"] = _d2_to_json(record.d2)
    return json.dumps(payload, separators=(",", ":"))


def serialize_database(db: TsDatabase) -> str:
    """Header line, one #meta line, then one compact JSON record per line."""
    h = db.header
    lines = [f"{DB_MAGIC} {DB_VERSION} {h.rows} {h.cols} {h.z} {h.matrix_digest} {h.strategy} {h.seed}"]
    meta = {
        "lifts": [lift.model_dump() for lift in h.lifts],
        "lifted_z": h.lifted_z,
        "base_digest": h.base_digest,
        "diffs": [[dw, dv, count] for (dw, dv), count in sorted(db.projection_diffs.items())],
        "manifest_digest": h.manifest_digest,
    }
    lines.append(META_PREFIX + json.dumps(meta, sort_keys=True, separators=(",", ":")))
    records = sorted(db.records, key=lambda r: (r.w, r.v, r.canonical_key))
    lines.extend(_record_line(r) for r in records)
    return "\n".join(lines) + "\n"


def database_digest(db: TsDatabase) -> str:
    return hashlib.sha256(serialize_database(db).encode("ascii")).hexdigest()[:16]


def _parse_header(line: str) -> DatabaseHeader:
    tokens = line.split(" ")
    if len(tokens) != 8 or tokens[0] != DB_MAGIC:
        raise IntegrityError(f"Not a TS database header: {line!r}")
    if tokens[1] != DB_VERSION:
        raise IntegrityError(f"Unsupported TS database version {tokens[1]}")
    try:
        m, n, z, seed = int(tokens[2]), int(tokens[3]), int(tokens[4]), int(tokens[7])
    except ValueError:
        raise IntegrityError(f"Malformed numeric field in header: {line!r}")
    return DatabaseHeader(rows=m, cols=n, z=z, matrix_digest=tokens[5], strategy=tokens[6], seed=seed)


def parse_database(text: str, E: Optional[ExponentMatrix] = None) -> TsDatabase:
    """
    Parse a TS database and check it for self-consistency.

    Args:
        text: file contents
        E: matrix the records should be classified under; when given, the
            header digest must match and every record is reclassified

    Raises:
        IntegrityError: malformed lines, digest mismatch, non-canonical or
            misclassified records, duplicate orbits
    """
    if not text.endswith("\n"):
        raise IntegrityError("TS database must end with a line feed")
    lines = text[:-1].split("\n")
    try:
        header = _parse_header(lines[0])
    except ValueError as e:
        raise IntegrityError(f"Invalid TS database header: {e}")

    if E is not None:
        if (E.rows, E.cols, E.z) != (header.rows, header.cols, header.z):
            raise IntegrityError(
                f"Database is for m={header.rows} n={header.cols} z={header.z} (digest {header.matrix_digest}), "
                f"matrix has m={E.rows} n={E.cols} z={E.z} (digest {matrix_digest(E)})"
            )
        if header.matrix_digest != matrix_digest(E):
            raise IntegrityError(
                f"Matrix digest mismatch: database {header.matrix_digest}, matrix {matrix_digest(E)}"
            )
    A = E.array() if E is not None else None

    body = lines[1:]
    diffs: Dict[Tuple[int, int], int] = {}
    while body and body[0].startswith(META_PREFIX):
        try:
            meta = json.loads(body.pop(0)[len(META_PREFIX):])
            header.lifts = [LiftMeta(**lift) for lift in meta.get("lifts", [])]
            header.lifted_z = meta.get("lifted_z")
            header.base_digest = meta.get("base_digest")
            header.manifest_digest = meta.get("manifest_digest")
            diffs = {(int(dw), int(dv)): int(count) for dw, dv, count in meta.get("diffs", [])}
        except (ValueError, TypeError, AttributeError) as e:
            raise IntegrityError(f"Malformed #meta line: {e}")

    length = header.cols * header.z
    records = []
    for number, line in enumerate(body, start=2):
        try:
            payload = json.loads(line)
            support = SupportVector(length=length, support=tuple(payload["supp"]))
            w, v = int(payload["w"]), int(payload["v"])
            flags = tuple(payload.get("flags", []))
            d2 = float(payload["d2"]) if "d2" in payload else None
        except (ValueError, KeyError, TypeError) as e:
            raise IntegrityError(f"Malformed record on line {number}: {e}")
        if support.weight != w:
            raise IntegrityError(f"Line {number}: w={w} but support has weight {support.weight}")
        canonical, _ = canonical_indices(support.array(), header.z)
        if tuple(canonical.tolist()) != support.support:
            raise IntegrityError(f"Line {number}: support is not in canonical-shift form")
        if A is not None:
            actual_v = syndrome_indices(A, header.z, support.array()).size
            if actual_v != v:
                raise IntegrityError(f"Line {number}: stored v={v}, reclassified v={actual_v}")
        records.append(make_record(support.support, v, header.cols, header.z, flags, d2))

    try:
        return TsDatabase(header=header, records=records, projection_diffs=diffs)
    except ValueError as e:
        raise IntegrityError(f"Invalid TS database: {e}")


def read_database(path: PathLike, E: Optional[ExponentMatrix] = None) -> TsDatabase:
    db = parse_database(_read_text(path), E)
    logger.info(f"Read {len(db.records)} records from {path}")
    return db


def write_database(path: PathLike, db: TsDatabase) -> str:
    """Write atomically; returns the database digest."""
    text = serialize_database(db)
    with atomic_write(path) as handle:
        handle.write(text)
    logger.info(f"Wrote {len(db.records)} records to {path}")
    return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


def report_payload(estimate: PfEstimate, manifest_digest: Optional[str] = None) -> Dict[str, Any]:
    payload = estimate.model_dump(mode="json")
    payload["L"] = payload.pop("samples")
    payload["manifest_digest"] = manifest_digest
    return payload


def write_report(path: PathLike, estimate: PfEstimate, manifest_digest: Optional[str] = None) -> None:
    with atomic_write(path) as handle:
        json.dump(report_payload(estimate, manifest_digest), handle, indent=2, sort_keys=True)
        handle.write("\n")
    logger.info(f"Wrote estimate report to {path}")


def _csv_text(header: List[str], rows: List[List[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def distribution_csv(table: np.ndarray) -> str:
    """Nonzero (w, v) classes as ``w,v,count`` rows; only the header when empty."""
    rows = [[int(w), int(v), int(table[w, v])] for w, v in zip(*np.nonzero(table))]
    return _csv_text(["w", "v", "count"], rows)


def diff_csv(diffs: Dict[Tuple[int, int], int]) -> str:
    """``dw,dv,frequency`` rows with percentages to 6 decimals."""
    total = sum(diffs.values())
    rows = [[dw, dv, f"{100.0 * count / total:.6f}"] for (dw, dv), count in sorted(diffs.items())]
    return _csv_text(["dw", "dv", "frequency"], rows)


def format_distribution(table: np.ndarray) -> str:
    """Text table with w down the rows and v across the columns; zero cells left blank."""
    V = table.shape[1]
    width = max(6, len(str(int(table.max()))) + 1) if table.size else 6
    lines = ["w\\v".ljust(5) + "".join(str(v).rjust(width) for v in range(V))]
    for w in range(1, table.shape[0]):
        if not table[w].any():
            continue
        cells = "".join((str(int(c)) if c else "").rjust(width) for c in table[w])
        lines.append(str(w).ljust(5) + cells)
    return "\n".join(lines)


def format_diffs(diffs: Dict[Tuple[int, int], int]) -> str:
    total = sum(diffs.values())
    lines = ["w-w'  v-v'  frequency, %"]
    for (dw, dv), count in sorted(diffs.items()):
        lines.append(f"{dw:>5} {dv:>5}  {100.0 * count / total:.6f}")
    return "\n".join(lines)


class RunManifest(BaseModel):
    """Everything needed to rerun a command and reproduce its output."""
    command: str = Field(..., description="Subcommand name")
    args: Dict[str, Any] = Field(default_factory=dict, description="Parsed flags")
    seeds: List[int] = Field(default_factory=list)
    input_digests: Dict[str, str] = Field(default_factory=dict, description="Input path -> content digest")
    version: str = Field(__version__, description="Toolkit version")
    wall_clock: float = Field(0.0, description="Elapsed seconds")
    threads: int = Field(1, description="Worker count")

    def digest(self) -> str:
        """Digest over the fields that determine the output; timing and worker count are left out."""
        payload = self.model_dump(include={"command", "args", "seeds", "input_digests", "version"})
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


def manifest_path(out_path: PathLike) -> Path:
    out = Path(out_path)
    return out.with_name(out.name + ".manifest.json")


def write_manifest(out_path: PathLike, manifest: RunManifest) -> Path:
    """
    Write the sidecar ``<out>.manifest.json``.

    Timing and worker count go to the log instead of the file, so re-running
    a command rewrites the sidecar byte-for-byte.
    """
    target = manifest_path(out_path)
    payload = manifest.model_dump(exclude={"wall_clock", "threads"})
    payload["digest"] = manifest.digest()
    with atomic_write(target) as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=str)
        handle.write("\n")
    logger.info(
        f"{manifest.command} finished in {manifest.wall_clock:.3f}s with {manifest.threads} threads; "
        f"manifest {payload['digest']} at {target}"
    )
    return target


def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
