"""
Pydantic models for quasi-cyclic code data.
"""
import hashlib
from typing import Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator


class ExponentMatrix(BaseModel):
    """Exponent matrix E(H) of a QC parity-check matrix; -1 marks a zero block."""
    rows: int = Field(..., ge=1, description="Number of block rows m")
    cols: int = Field(..., ge=1, description="Number of block columns n")
    z: int = Field(..., ge=1, description="Circulant size")
    entries: Tuple[Tuple[int, ...], ...] = Field(..., description="m x n circulant exponents")

    class Config:
        frozen = True

    @validator("entries")
    def entries_match_shape(cls, v, values):
        rows, cols, z = values.get("rows"), values.get("cols"), values.get("z")
        if rows is None or cols is None or z is None:
            return v
        if len(v) != rows:
            raise ValueError(f"Expected {rows} rows of exponents, got {len(v)}")
        for i, row in enumerate(v):
            if len(row) != cols:
                raise ValueError(f"Row {i} has {len(row)} entries, expected {cols}")
            for q, a in enumerate(row):
                if a < -1 or a >= z:
                    raise ValueError(f"Entry ({i},{q}) = {a} outside [-1, {z - 1}]")
        return v

    @property
    def length(self) -> int:
        """Code length N = n*z."""
        return self.cols * self.z

    @property
    def check_length(self) -> int:
        return self.rows * self.z

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64).reshape(self.rows, self.cols)

    def mask(self) -> np.ndarray:
        """Boolean m x n array, True where the block is a circulant power."""
        return self.array() >= 0


class SupportVector(BaseModel):
    """Sparse binary vector of length N stored as its sorted support."""
    length: int = Field(..., ge=1, description="Vector length N")
    support: Tuple[int, ...] = Field((), description="Strictly increasing nonzero positions")

    class Config:
        frozen = True

    @validator("support")
    def support_sorted_and_in_range(cls, v, values):
        length = values.get("length")
        for a, b in zip(v, v[1:]):
            if a >= b:
                raise ValueError("Support indices must be strictly increasing")
        if v and (v[0] < 0 or (length is not None and v[-1] >= length)):
            raise ValueError(f"Support index outside [0, {length})")
        return v

    @classmethod
    def from_indices(cls, indices: Iterable[int], length: int) -> "SupportVector":
        """Build from indices already known to be sorted, unique and in range."""
        return cls.model_construct(length=length, support=tuple(int(i) for i in indices))

    @classmethod
    def from_unsorted(cls, indices: Iterable[int], length: int) -> "SupportVector":
        return cls(length=length, support=tuple(sorted(set(int(i) for i in indices))))

    @classmethod
    def zero(cls, length: int) -> "SupportVector":
        return cls.model_construct(length=length, support=())

    @property
    def weight(self) -> int:
        return len(self.support)

    def array(self) -> np.ndarray:
        return np.array(self.support, dtype=np.int64)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.uint8)
        out[list(self.support)] = 1
        return out

    def xor(self, other: "SupportVector") -> "SupportVector":
        if other.length != self.length:
            raise ValueError(f"Length mismatch: {self.length} vs {other.length}")
        return SupportVector.from_indices(sorted(set(self.support) ^ set(other.support)), self.length)


class TsRecord(BaseModel):
    """A (w, v) trapping set stored in canonical-shift form."""
    support: SupportVector
    w: int = Field(..., ge=0, description="Hamming weight of the support")
    v: int = Field(..., ge=0, description="Number of unsatisfied checks")
    canonical_key: bytes = Field(..., description="Serialized canonical-shift support")
    flags: Tuple[str, ...] = Field((), description="Annotations such as weight_changed")
    d2: Optional[float] = Field(None, description="Error boundary distance (Strategy I)")

    class Config:
        frozen = True

    @validator("w")
    def weight_matches_support(cls, v, values):
        support = values.get("support")
        if support is not None and support.weight != v:
            raise ValueError(f"w={v} does not match support weight {support.weight}")
        return v


class LiftSpec(BaseModel):
    """Lifting data: factor l and the m x n matrix B with entries in [0, l-1]."""
    factor: int = Field(..., gt=1, description="Lift factor l")
    bits: Tuple[Tuple[int, ...], ...] = Field(..., description="m x n lift offsets b_ij")
    seed: Optional[int] = Field(None, description="Seed B was drawn from, if generated")

    class Config:
        frozen = True

    @validator("bits")
    def bits_in_range(cls, v, values):
        factor = values.get("factor")
        if not v or not v[0]:
            raise ValueError("Lift matrix B must be non-empty")
        width = len(v[0])
        for i, row in enumerate(v):
            if len(row) != width:
                raise ValueError(f"Lift matrix row {i} has {len(row)} entries, expected {width}")
            if factor is not None and any(b < 0 or b >= factor for b in row):
                raise ValueError(f"Lift matrix row {i} has entries outside [0, {factor - 1}]")
        return v

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.bits), len(self.bits[0])

    def digest(self) -> str:
        """Truncated SHA-256 of the factor and B, for run metadata."""
        text = f"{self.factor}\n" + "".join(" ".join(str(b) for b in row) + "\n" for row in self.bits)
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]
