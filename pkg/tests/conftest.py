"""
Shared fixtures and oracles for the qcts test suite.
"""
import itertools
from typing import Set

import numpy as np
import pytest

from qcts.models import ExponentMatrix
from qcts.qc_core import REFERENCE_MATRIX_TEXT, expand_dense, parse_exponent_matrix
from qcts.transforms import canonical_indices, key_bytes


def random_exponent_matrix(rng: np.random.Generator, m: int, n: int, z: int, p_zero: float = 0.2) -> ExponentMatrix:
    """Random exponent matrix; each block is the zero block with probability p_zero."""
    A = rng.integers(0, z, size=(m, n))
    A[rng.random((m, n)) < p_zero] = -1
    return ExponentMatrix(rows=m, cols=n, z=z, entries=tuple(tuple(int(a) for a in row) for row in A))


def brute_force_orbits(E: ExponentMatrix, w_max: int, v_limit) -> Set[bytes]:
    """Canonical keys of every support with w <= w_max and v <= v_limit(w), from the dense matrix."""
    H = expand_dense(E).astype(np.int64)
    keys = set()
    for w in range(1, w_max + 1):
        for combo in itertools.combinations(range(E.length), w):
            v = int((H[:, list(combo)].sum(axis=1) % 2).sum())
            if v <= v_limit(w):
                keys.add(key_bytes(canonical_indices(np.array(combo), E.z)[0]))
    return keys


def gf2_rank(H: np.ndarray) -> int:
    M = H.copy().astype(np.uint8) % 2
    rank = 0
    rows, cols = M.shape
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if M[r, col]), None)
        if pivot is None:
            continue
        M[[rank, pivot]] = M[[pivot, rank]]
        for r in range(rows):
            if r != rank and M[r, col]:
                M[r] ^= M[rank]
        rank += 1
    return rank


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def reference_matrix():
    return parse_exponent_matrix(REFERENCE_MATRIX_TEXT)


@pytest.fixture
def small_code():
    """2 x 4 blocks, z = 3, one zero block."""
    return ExponentMatrix(rows=2, cols=4, z=3, entries=((0, 1, 2, -1), (0, 2, 1, 0)))


@pytest.fixture
def tiny_codes(rng):
    """A handful of random codes with n*z <= 20."""
    shapes = [(1, 4, 4), (2, 4, 4), (2, 5, 4), (1, 6, 3), (2, 6, 3), (3, 5, 4)]
    return [random_exponent_matrix(rng, m, n, z) for m, n, z in shapes]
