"""
Projection and lifting between circulant sizes z and z* (z = l * z*),
quasi-cyclic shifts and orbit canonicalization.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from qcts.models import ExponentMatrix, LiftSpec, SupportVector
from qcts.qc_core import syndrome_indices

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


def _check_divides(z: int, z_star: int) -> None:
    if z_star < 1 or z % z_star != 0:
        raise ValueError(f"z*={z_star} does not divide z={z}")


def _check_vector(x: SupportVector, n: int, z: int) -> None:
    if x.length != n * z:
        raise ValueError(f"Vector length {x.length} does not match n*z = {n}*{z}")


def project_exponents(E: ExponentMatrix, z_star: int) -> ExponentMatrix:
    """Reduce every nonnegative exponent mod z*; -1 stays -1."""
    _check_divides(E.z, z_star)
    entries = tuple(tuple(a % z_star if a >= 0 else -1 for a in row) for row in E.entries)
    return ExponentMatrix(rows=E.rows, cols=E.cols, z=z_star, entries=entries)


def pi_index(j: int, z: int, z_star: int) -> int:
    """Projection index operator: q*z + r  ->  q*z* + (r mod z*)."""
    _check_divides(z, z_star)
    q, r = divmod(j, z)
    return q * z_star + r % z_star


def project_indices(idx: np.ndarray, z: int, z_star: int) -> np.ndarray:
    """Vectorized pi_index followed by parity folding; returns the sorted image support."""
    if idx.size == 0:
        return np.empty(0, dtype=np.int64)
    q, r = np.divmod(idx, z)
    images = q * z_star + r % z_star
    values, counts = np.unique(images, return_counts=True)
    return values[counts % 2 == 1]


def project_vector(x: SupportVector, z: int, z_star: int, n: int) -> SupportVector:
    """XOR-fold a length n*z vector onto length n*z* via the classes pi^-1(j)."""
    _check_divides(z, z_star)
    _check_vector(x, n, z)
    return SupportVector.from_indices(project_indices(x.array(), z, z_star), n * z_star)


def lift_exponents(E: ExponentMatrix, spec: LiftSpec) -> ExponentMatrix:
    """Lift a_ij -> a_ij + b_ij * z with circulant size l * z; -1 stays -1."""
    if spec.shape != (E.rows, E.cols):
        raise ValueError(f"Lift matrix shape {spec.shape} does not match exponent matrix {(E.rows, E.cols)}")
    entries = tuple(
        tuple(a + b * E.z if a >= 0 else -1 for a, b in zip(row, bits))
        for row, bits in zip(E.entries, spec.bits)
    )
    return ExponentMatrix(rows=E.rows, cols=E.cols, z=spec.factor * E.z, entries=entries)


def derive_seed(root: int, j: int) -> int:
    """splitmix64 derivation of the j-th child seed of ``root``."""
    x = (root + (j + 1) * 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def random_lift_spec(m: int, n: int, factor: int, seed: int) -> LiftSpec:
    """
    Draw B from a counter-based generator keyed by (seed, factor, m, n).

    The same four values always give the same B.
    """
    key = np.random.SeedSequence([seed & _MASK64, factor, m, n])
    rng = np.random.Generator(np.random.Philox(key))
    bits = rng.integers(0, factor, size=(m, n))
    return LiftSpec(factor=factor, bits=tuple(tuple(int(b) for b in row) for row in bits), seed=seed)


def shift_indices(idx: np.ndarray, s: int, z: int) -> np.ndarray:
    q, r = np.divmod(idx, z)
    return np.sort(q * z + (r + s) % z)


def shift(x: SupportVector, s: int, n: int, z: int) -> SupportVector:
    """Apply pi_0^s: q*z + r -> q*z + ((r + s) mod z)."""
    _check_vector(x, n, z)
    return SupportVector.from_indices(shift_indices(x.array(), s, z), x.length)


def canonical_indices(idx: np.ndarray, z: int) -> Tuple[np.ndarray, int]:
    """Lexicographically smallest sorted support over all z shifts, and its smallest shift."""
    if idx.size == 0:
        return idx, 0
    q, r = np.divmod(idx, z)
    shifts = np.arange(z)[:, None]
    candidates = np.sort(q[None, :] * z + (r[None, :] + shifts) % z, axis=1)
    # lexsort treats the last key as primary; stable, so ties keep the smaller s.
    order = np.lexsort(candidates.T[::-1])
    s = int(order[0])
    return candidates[s], s


def key_bytes(idx: np.ndarray) -> bytes:
    """Big-endian uint32 serialization; byte order matches list order."""
    return np.asarray(idx, dtype=">u4").tobytes()


def canonical_form(x: SupportVector, n: int, z: int) -> Tuple[bytes, int]:
    """
    Canonical orbit key of x under the shift group.

    Returns:
        (key, s) where key serializes the smallest support among pi_0^s x and
        s is the smallest shift attaining it
    """
    _check_vector(x, n, z)
    canonical, s = canonical_indices(x.array(), z)
    return key_bytes(canonical), s


def orbit(x: SupportVector, n: int, z: int) -> List[SupportVector]:
    """Distinct shifts of x, in order of first appearance."""
    _check_vector(x, n, z)
    seen = {}
    idx = x.array()
    for s in range(z):
        shifted = shift_indices(idx, s, z)
        seen.setdefault(shifted.tobytes(), shifted)
    return [SupportVector.from_indices(v, x.length) for v in seen.values()]


def projection_class_change(
    E_lift: ExponentMatrix,
    E_base: ExponentMatrix,
    x: SupportVector,
    A_lift: Optional[np.ndarray] = None,
    A_base: Optional[np.ndarray] = None,
) -> Tuple[int, int, int, int]:
    """(w, v) of x under the lift and (w', v') of its projection under the base."""
    A_lift = E_lift.array() if A_lift is None else A_lift
    A_base = E_base.array() if A_base is None else A_base
    idx = x.array()
    projected = project_indices(idx, E_lift.z, E_base.z)
    w = idx.size
    v = syndrome_indices(A_lift, E_lift.z, idx).size
    w_p = projected.size
    v_p = syndrome_indices(A_base, E_base.z, projected).size
    return w, v, w_p, v_p


def shift_array(values: np.ndarray, s: int, n: int, z: int) -> np.ndarray:
    """pi_0^s applied to a dense length n*z array (real or binary)."""
    values = np.asarray(values)
    if values.shape != (n * z,):
        raise ValueError(f"Array shape {values.shape} does not match n*z = {n}*{z}")
    return np.roll(values.reshape(n, z), s, axis=1).reshape(-1)
