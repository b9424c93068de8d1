"""
Exponent-matrix representation of quasi-cyclic codes.

Syndromes, code membership and (w, v) classification are computed straight
from the exponents: variable j = q*z + r in block column q meets block row i
at check i*z + ((r - a_iq) mod z) whenever a_iq >= 0.
"""
import hashlib
import logging
import re
from typing import List, Tuple

import numpy as np

from qcts.errors import IntegrityError
from qcts.models import ExponentMatrix, SupportVector

logger = logging.getLogger(__name__)

_INT_LINE = re.compile(r"^-?\d+( -?\d+)*$")

# Reference code with m=4, n=20, z=128.
REFERENCE_MATRIX_TEXT = (
    "4 20 128\n"
    "21 65 126 39 84 89 16 89 94 28 31 12 101 9 122 99 90 65 41 -1\n"
    "12 29 27 105 0 0 0 2 108 78 126 98 27 1 41 118 49 17 12 11\n"
    "47 26 97 40 66 0 81 1 33 97 89 37 52 42 2 120 38 -1 86 7\n"
    "113 21 64 26 53 103 85 81 102 48 113 98 71 70 121 66 95 40 -1 23\n"
)


def parse_exponent_matrix(text: str) -> ExponentMatrix:
    """
    Parse the exponent-matrix text format.

    Line 1 is ``m n z``; then m lines of n integers in [-1, z-1]. Single
    spaces, LF line endings, no comments and no trailing whitespace.

    Raises:
        IntegrityError: on any deviation from the format or out-of-range entry
    """
    if not text.endswith("\n"):
        raise IntegrityError("Exponent matrix text must end with a line feed")
    lines = text[:-1].split("\n")
    for number, line in enumerate(lines, start=1):
        if not _INT_LINE.match(line):
            raise IntegrityError(f"Line {number} is not a single-space separated integer list: {line!r}")

    header = [int(t) for t in lines[0].split(" ")]
    if len(header) != 3:
        raise IntegrityError(f"Header must be 'm n z', got {lines[0]!r}")
    m, n, z = header
    if m < 1 or n < 1 or z < 1:
        raise IntegrityError(f"Header values must be positive, got m={m} n={n} z={z}")

    body = lines[1:]
    if len(body) != m:
        raise IntegrityError(f"Expected {m} matrix rows, found {len(body)}")

    entries = []
    for i, line in enumerate(body):
        row = tuple(int(t) for t in line.split(" "))
        if len(row) != n:
            raise IntegrityError(f"Row {i} has {len(row)} entries, expected {n}")
        for q, a in enumerate(row):
            if a < -1:
                raise IntegrityError(f"Entry ({i},{q}) = {a} is below -1")
            if a >= z:
                raise IntegrityError(f"Entry ({i},{q}) = {a} is not reduced mod z={z}")
        entries.append(row)

    return ExponentMatrix(rows=m, cols=n, z=z, entries=tuple(entries))


def serialize_exponent_matrix(E: ExponentMatrix) -> str:
    """Inverse of parse_exponent_matrix."""
    lines = [f"{E.rows} {E.cols} {E.z}"]
    lines.extend(" ".join(str(a) for a in row) for row in E.entries)
    return "\n".join(lines) + "\n"


def matrix_digest(E: ExponentMatrix) -> str:
    return hashlib.sha256(serialize_exponent_matrix(E).encode("ascii")).hexdigest()[:16]


def reduce_exponents(rows: List[List[int]], z: int) -> ExponentMatrix:
    """Build an ExponentMatrix, reducing nonnegative entries mod z."""
    if not rows:
        raise ValueError("At least one row is required")
    entries = tuple(tuple(-1 if a == -1 else a % z for a in row) for row in rows)
    return ExponentMatrix(rows=len(entries), cols=len(entries[0]), z=z, entries=entries)


def mother_matrix(E: ExponentMatrix) -> np.ndarray:
    """Binary m x n base matrix: 0 where a_ij = -1, 1 elsewhere."""
    return E.mask().astype(np.uint8)


def expand_dense(E: ExponentMatrix) -> np.ndarray:
    """Dense mz x nz parity-check matrix over F2."""
    z = E.z
    H = np.zeros((E.check_length, E.length), dtype=np.uint8)
    r = np.arange(z)
    for i, row in enumerate(E.entries):
        for q, a in enumerate(row):
            if a >= 0:
                H[i * z + (r - a) % z, q * z + r] = 1
    return H


def _check_length(E: ExponentMatrix, x: SupportVector) -> None:
    if x.length != E.length:
        raise ValueError(f"Vector length {x.length} does not match code length {E.length}")


def syndrome_indices(A: np.ndarray, z: int, idx: np.ndarray) -> np.ndarray:
    """Sorted unsatisfied check indices for support ``idx`` under exponents ``A``."""
    m = A.shape[0]
    if idx.size == 0:
        return np.empty(0, dtype=np.int64)
    q, r = np.divmod(idx, z)
    a = A[:, q]
    valid = a >= 0
    rows = np.broadcast_to(np.arange(m)[:, None], a.shape)
    checks = rows[valid] * z + (np.broadcast_to(r, a.shape)[valid] - a[valid]) % z
    counts = np.bincount(checks, minlength=m * z)
    return np.flatnonzero(counts & 1)


def syndrome(E: ExponentMatrix, x: SupportVector) -> SupportVector:
    """supp(H x^T) without expanding H; result has length m*z."""
    _check_length(E, x)
    checks = syndrome_indices(E.array(), E.z, x.array())
    return SupportVector.from_indices(checks, E.check_length)


def classify_ts(E: ExponentMatrix, x: SupportVector) -> Tuple[int, int]:
    """Return (w, v); the zero vector gives (0, 0)."""
    return x.weight, syndrome(E, x).weight


def check_index_map(E: ExponentMatrix, block_row: int, j: int) -> int:
    """
    Within-block check row hit by variable j in block row ``block_row``.

    Args:
        E: exponent matrix
        block_row: block row i
        j: variable index q*z + r

    Returns:
        (r - a_iq) mod z
    """
    if not 0 <= block_row < E.rows:
        raise ValueError(f"Block row {block_row} outside [0, {E.rows})")
    if not 0 <= j < E.length:
        raise ValueError(f"Variable index {j} outside [0, {E.length})")
    q, r = divmod(j, E.z)
    a = E.entries[block_row][q]
    if a < 0:
        raise ValueError(f"Variable {j} has no edge into block row {block_row} (zero block)")
    return (r - a) % E.z


def is_codeword(E: ExponentMatrix, x: SupportVector) -> bool:
    return syndrome(E, x).weight == 0


def variable_checks(E: ExponentMatrix, j: int) -> List[int]:
    """Check nodes adjacent to variable j in the Tanner graph."""
    q, r = divmod(j, E.z)
    return [i * E.z + (r - row[q]) % E.z for i, row in enumerate(E.entries) if row[q] >= 0]


def check_variables(E: ExponentMatrix, c: int) -> List[int]:
    """Variable nodes adjacent to check c in the Tanner graph."""
    i, s = divmod(c, E.z)
    return [q * E.z + (s + a) % E.z for q, a in enumerate(E.entries[i]) if a >= 0]


def variable_check_masks(E: ExponentMatrix) -> List[int]:
    """Per-variable syndrome contribution as an integer bitmask over checks."""
    masks = []
    for j in range(E.length):
        mask = 0
        for c in variable_checks(E, j):
            mask ^= 1 << c
        masks.append(mask)
    logger.debug(f"Built {len(masks)} variable check masks")
    return masks
