"""
Pydantic models for the importance-sampling error-floor estimator.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator

from qcts.models import SupportVector
from qcts.transforms import canonical_indices, key_bytes


class BiasMode(str, Enum):
    """Sampling density of estimate_pf."""
    REDUCED = "reduced"
    FULL_ORBIT = "full_orbit"
    PLAIN = "plain"


class Denominator(str, Enum):
    TABULAR = "tabular"
    NAIVE = "naive"


class WeightPolicy(str, Enum):
    """What to do with a sample whose weight is not finite."""
    ABORT = "abort"
    SKIP = "skip"


DELTA_POLICY = "per-sample reference shift: delta = |xi|^2 / (2 sigma^2)"


class BiasEnsemble(BaseModel):
    """
    Basis of p trapping sets x_j^b with the displacement mu and noise sigma.

    Bias points are y_j^b = c - mu * x_j^b, with c the all-ones image of the
    all-zero codeword.
    """
    supports: List[SupportVector] = Field(..., description="Basis trapping sets, pairwise non-equivalent")
    mu: float = Field(..., gt=0, description="Displacement parameter")
    sigma: float = Field(..., gt=0, description="Noise standard deviation")
    n: int = Field(..., ge=1, description="Block columns")
    z: int = Field(..., ge=1, description="Circulant size")

    class Config:
        frozen = True

    @validator("supports")
    def supports_are_valid(cls, v):
        if not v:
            raise ValueError("Bias ensemble needs at least one trapping set")
        if any(x.weight == 0 for x in v):
            raise ValueError("Bias ensemble supports must be nonzero")
        return v

    @validator("z")
    def supports_match_length(cls, v, values):
        supports, n = values.get("supports"), values.get("n")
        if supports is None or n is None:
            return v
        keys = set()
        for x in supports:
            if x.length != n * v:
                raise ValueError(f"Support length {x.length} does not match n*z = {n}*{v}")
            keys.add(key_bytes(canonical_indices(x.array(), v)[0]))
        if len(keys) != len(supports):
            raise ValueError("Bias ensemble supports must be pairwise non-equivalent under shifts")
        return v

    @property
    def p(self) -> int:
        return len(self.supports)

    @property
    def length(self) -> int:
        return self.n * self.z


class TableSet(BaseModel):
    """
    Set-difference tables between shifted basis supports.

    For every (k, l, j): A = pi_0^j supp x_k, B = supp x_l. ``j1[k, l, j]``
    is True when A and B intersect; T1 = A \\ B and T2 = B \\ A are stored for
    those entries and derived on demand for the disjoint ones.
    """
    p: int
    z: int
    n: int
    weights: np.ndarray = Field(..., description="Basis weights |x_k|")
    supports: List[np.ndarray] = Field(..., description="Basis supports as index arrays")
    shifted: List[np.ndarray] = Field(..., description="Per k, a (z, w_k) array of pi_0^j supp x_k")
    j1: np.ndarray = Field(..., description="(p, p, z) bool: shifted support meets the other support")
    sym_diff: np.ndarray = Field(..., description="(p, p, z) symmetric-difference sizes")
    t1: Dict[Tuple[int, int, int], np.ndarray] = Field(default_factory=dict)
    t2: Dict[Tuple[int, int, int], np.ndarray] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    def t1_set(self, k: int, l: int, j: int) -> np.ndarray:
        j %= self.z
        if self.j1[k, l, j]:
            return self.t1[(k, l, j)]
        return self.shifted[k][j]

    def t2_set(self, k: int, l: int, j: int) -> np.ndarray:
        j %= self.z
        if self.j1[k, l, j]:
            return self.t2[(k, l, j)]
        return self.supports[l]

    def j1_indices(self, k: int, l: int) -> np.ndarray:
        return np.flatnonzero(self.j1[k, l])

    def j2_indices(self, k: int, l: int) -> np.ndarray:
        return np.flatnonzero(~self.j1[k, l])


class BiasPointStats(BaseModel):
    """Per-basis-element breakdown of an estimate."""
    index: int
    w: int
    v: Optional[int] = None
    samples: int = 0
    failures: int = 0
    contribution: float = Field(0.0, description="Sum of I_e * w over this point's samples, divided by L")


class PfEstimate(BaseModel):
    """Frame error probability estimate with its diagnostics."""
    estimate: float = Field(..., description="Estimated P_f")
    stderr: float = Field(..., description="Sample standard deviation / sqrt(L)")
    samples: int = Field(..., ge=1, description="Samples L drawn")
    used_samples: int = Field(..., ge=0, description="Samples entering the mean")
    failures: int = Field(..., ge=0, description="Samples with I_e = 1")
    skipped: List[int] = Field(default_factory=list, description="Samples excluded for non-finite weight")
    p: int
    z: int
    mu: float
    sigma: float
    seed: int
    bias: BiasMode = BiasMode.REDUCED
    denominator: Denominator = Denominator.TABULAR
    failure_criterion: str
    delta_policy: str = DELTA_POLICY
    table_disjointness: Optional[float] = Field(None, description="Share of (k, l, j) in J2")
    per_point: List[BiasPointStats] = Field(default_factory=list)

    @validator("estimate", "stderr")
    def non_negative(cls, v):
        if v < 0:
            raise ValueError(f"Estimate fields must be non-negative, got {v}")
        return v


class SampleBatch(BaseModel):
    """Per-sample results of one estimator run, indexed by sample number l."""
    values: np.ndarray = Field(..., description="I_e(y_l) * w(y_l)")
    points: np.ndarray = Field(..., description="Basis index of each sample, -1 for plain sampling")
    failed: np.ndarray = Field(..., description="I_e(y_l)")
    valid: np.ndarray = Field(..., description="False for samples skipped by the weight policy")

    class Config:
        arbitrary_types_allowed = True
