"""
Pydantic models for trapping-set search settings and databases.
"""
from collections import Counter
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, validator

from qcts.models import TsRecord


class SearchMode(str, Enum):
    """Search objective."""
    STRATEGY_I = "strategy_I"
    STRATEGY_II = "strategy_II"
    EXHAUSTIVE = "exhaustive"


class ImpulseKind(str, Enum):
    """Pattern generator for the impulse searches."""
    RANDOM = "random"
    CYCLE = "cycle"


class SearchStrategy(BaseModel):
    """Constraints and budget for one solve call."""
    mode: SearchMode = Field(SearchMode.STRATEGY_II, description="Search objective")
    impulse: ImpulseKind = Field(ImpulseKind.RANDOM, description="Impulse pattern generator")
    w_max: int = Field(8, ge=1, description="Largest trapping-set weight kept")
    v_scale: float = Field(1.0, ge=0, description="Slope of the bound v(w) = floor(v_scale*w) + v_offset")
    v_offset: int = Field(0, description="Offset of the bound v(w)")
    v_max: Optional[int] = Field(None, ge=0, description="Hard cap on v regardless of w")
    trials: int = Field(1000, ge=1, description="Impulse trials budget")
    impulse_amplitude: float = Field(1.5, gt=0, description="Displacement applied to impulse positions")
    impulse_weight: int = Field(3, ge=1, description="Largest random impulse pattern weight")
    noise_sigma: float = Field(0.0, ge=0, description="Gaussian noise added to impulse trials")
    harvest_window: int = Field(4, ge=1, description="Trailing iterations harvested for oscillating supports")
    max_records: Optional[int] = Field(None, ge=1, description="Keep only the best-ranked records")
    seed: int = Field(0, description="64-bit seed")

    class Config:
        frozen = True

    def v_limit(self, w: int) -> int:
        """Largest admissible v for weight w."""
        limit = int(self.v_scale * w) + self.v_offset
        if self.v_max is not None:
            limit = min(limit, self.v_max)
        return limit

    def admits(self, w: int, v: int) -> bool:
        return 0 < w <= self.w_max and v <= self.v_limit(w)

    def describe(self) -> str:
        """Single token naming the strategy, used in database headers."""
        if self.mode == SearchMode.EXHAUSTIVE:
            return self.mode.value
        return f"{self.mode.value}/{self.impulse.value}"


class LiftMeta(BaseModel):
    """Metadata of one lift used by enumerate_qc."""
    index: int
    factor: int
    seed: Optional[int] = None
    bits_digest: str


class DatabaseHeader(BaseModel):
    """Header of a TS database file."""
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    z: int = Field(..., ge=1)
    matrix_digest: str = Field(..., description="Digest of the matrix the records are classified under")
    strategy: str = Field(..., description="Strategy token")
    seed: int = Field(0, description="Root seed")
    lifts: List[LiftMeta] = Field(default_factory=list, description="Lifts used, empty for a direct solve")
    lifted_z: Optional[int] = Field(None, description="Circulant size of the lifted matrices")
    base_digest: Optional[str] = Field(None, description="Digest of the base matrix when records live on a lift")
    manifest_digest: Optional[str] = Field(None, description="Digest of the run manifest")


class TsDatabase(BaseModel):
    """Pairwise non-equivalent trapping sets of one matrix."""
    header: DatabaseHeader
    records: List[TsRecord] = Field(default_factory=list)
    projection_diffs: Dict[Tuple[int, int], int] = Field(
        default_factory=dict, description="(w - w', v - v') histogram gathered while projecting lifts"
    )

    @validator("records")
    def keys_are_distinct(cls, v):
        keys = [r.canonical_key for r in v]
        if len(set(keys)) != len(keys):
            raise ValueError("Database records must be pairwise non-equivalent")
        return v

    def class_counts(self) -> Counter:
        return Counter((r.w, r.v) for r in self.records)
