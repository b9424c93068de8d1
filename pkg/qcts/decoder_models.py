"""
Pydantic models for decoder configuration and results.
"""
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator

from qcts.models import SupportVector


class FailureCriterion(str, Enum):
    """When a decode counts as a failure."""
    NON_CODEWORD = "non_codeword"
    NOT_TRANSMITTED = "not_transmitted"


class DecoderConfig(BaseModel):
    """Normalized min-sum decoder settings."""
    iterations: int = Field(20, ge=1, description="Maximum iterations k")
    normalization: float = Field(0.75, description="Check-message scaling factor in (0, 1]")
    failure: FailureCriterion = Field(FailureCriterion.NOT_TRANSMITTED, description="Failure criterion")
    early_exit: bool = Field(True, description="Stop once the syndrome is zero")
    track_history: bool = Field(False, description="Record the hard-decision support after every iteration")

    class Config:
        frozen = True

    @validator("normalization")
    def normalization_in_range(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError(f"Normalization factor must lie in (0, 1], got {v}")
        return v


class ChannelModel(BaseModel):
    """BPSK over AWGN; bit 0 maps to +1, the all-zero word is sent as c = (1, ..., 1)."""
    sigma: float = Field(..., gt=0, description="Noise standard deviation")

    class Config:
        frozen = True

    def transmitted(self, length: int) -> np.ndarray:
        return np.ones(length, dtype=np.float64)


class DecoderOutput(BaseModel):
    """Result of one decode call."""
    hard: np.ndarray = Field(..., description="Hard decisions, uint8 0/1")
    soft: np.ndarray = Field(..., description="Final a-posteriori LLRs")
    unsatisfied: List[int] = Field(..., description="Unsatisfied checks after each iteration")
    history: Optional[List[Tuple[int, ...]]] = Field(
        None, description="Hard-decision supports: channel decision first, then each iteration"
    )

    class Config:
        arbitrary_types_allowed = True

    @property
    def iterations(self) -> int:
        return len(self.unsatisfied)

    @property
    def converged(self) -> bool:
        return bool(self.unsatisfied) and self.unsatisfied[-1] == 0

    def error_support(self) -> SupportVector:
        return SupportVector.from_indices(np.flatnonzero(self.hard), self.hard.size)


class BoundaryDistance(BaseModel):
    """Squared distance from c to the decoder-failure boundary along a TS direction."""
    d2: float = Field(..., description="Squared Euclidean distance; inf when unbounded")
    t: float = Field(..., description="Ray parameter at the failing side of the boundary")
    unbounded: bool = Field(False, description="No failure found up to t_max")
    non_monotone: bool = Field(False, description="Failure along the ray was not monotone")
