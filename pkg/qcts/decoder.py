"""
Normalized min-sum decoding of QC codes over BPSK/AWGN.

Messages live in (m, n, z) arrays indexed by (block row, block column,
position inside the block). Check-node processing gathers each block into
check order with the exponent offsets, so the flooding schedule treats every
position of a circulant identically and commutes with quasi-cyclic shifts.
"""
import logging
from functools import lru_cache

import numpy as np

from qcts.decoder_models import (
    BoundaryDistance, ChannelModel, DecoderConfig, DecoderOutput, FailureCriterion
)
from qcts.models import ExponentMatrix, SupportVector

logger = logging.getLogger(__name__)


class _TannerLayout:
    """Gather indices between variable order and check order for one exponent matrix."""

    def __init__(self, E: ExponentMatrix):
        A = E.array()
        mask = A >= 0
        z = E.z
        positions = np.arange(z)
        offsets = np.where(mask, A, 0)[:, :, None]
        self.rows, self.cols, self.z = E.rows, E.cols, z
        self.mask3 = np.broadcast_to(mask[:, :, None], (E.rows, E.cols, z))
        # check order: C[i, q, c] = V[i, q, (c + a_iq) mod z]
        self.to_check = (positions[None, None, :] + offsets) % z
        # variable order: V[i, q, r] = C[i, q, (r - a_iq) mod z]
        self.to_var = (positions[None, None, :] - offsets) % z

    def unsatisfied(self, hard: np.ndarray) -> int:
        bits = np.broadcast_to(hard[None, :, :], self.mask3.shape)
        in_check_order = np.take_along_axis(bits, self.to_check, axis=2) & self.mask3
        return int(np.count_nonzero(in_check_order.sum(axis=1) % 2))


@lru_cache(maxsize=32)
def _layout(E: ExponentMatrix) -> _TannerLayout:
    return _TannerLayout(E)


def awgn_llr(y: np.ndarray, sigma: float) -> np.ndarray:
    """Channel LLRs 2*y/sigma^2 under the 0 -> +1 mapping."""
    if sigma <= 0:
        raise ValueError(f"Noise standard deviation must be positive, got {sigma}")
    return 2.0 * np.asarray(y, dtype=np.float64) / (sigma * sigma)


def transmit(channel: ChannelModel, length: int, rng: np.random.Generator) -> np.ndarray:
    """Received word for the all-zero codeword: c + xi."""
    return channel.transmitted(length) + rng.normal(0.0, channel.sigma, size=length)


def _check_update(V: np.ndarray, layout: _TannerLayout, factor: float) -> np.ndarray:
    mask3 = layout.mask3
    Vc = np.take_along_axis(V, layout.to_check, axis=2)
    mag = np.where(mask3, np.abs(Vc), np.inf)

    arg = np.argmin(mag, axis=1)[:, None, :]
    min1 = np.take_along_axis(mag, arg, axis=1)
    without_min = mag.copy()
    np.put_along_axis(without_min, arg, np.inf, axis=1)
    min2 = without_min.min(axis=1, keepdims=True)
    is_min = np.arange(layout.cols)[None, :, None] == arg
    out_mag = np.where(is_min, min2, min1)

    neg = (Vc < 0) & mask3
    odd = (np.count_nonzero(neg, axis=1) % 2 == 1)[:, None, :]
    out = np.where(odd ^ neg, -out_mag, out_mag) * factor
    # degree-1 checks carry no extrinsic information
    out = np.where(mask3 & np.isfinite(out_mag), out, 0.0)
    return np.take_along_axis(out, layout.to_var, axis=2)


def decode(E: ExponentMatrix, llr: np.ndarray, cfg: DecoderConfig) -> DecoderOutput:
    """
    Flooding normalized min-sum decoding.

    Args:
        E: exponent matrix of the code
        llr: channel LLRs, length n*z, positive favours bit 0
        cfg: decoder settings

    Returns:
        DecoderOutput with hard decisions, final soft values and the
        unsatisfied-check count after every iteration
    """
    llr = np.asarray(llr, dtype=np.float64)
    if llr.shape != (E.length,):
        raise ValueError(f"LLR length {llr.shape} does not match code length {E.length}")
    if not np.all(np.isfinite(llr)):
        raise ValueError("LLR vector contains non-finite values")

    layout = _layout(E)
    channel = llr.reshape(E.cols, E.z)
    V = np.where(layout.mask3, channel[None, :, :], 0.0)
    total = channel
    hard = channel < 0

    history = [tuple(np.flatnonzero(hard.reshape(-1)).tolist())] if cfg.track_history else None
    unsatisfied = []
    for _ in range(cfg.iterations):
        C = _check_update(V, layout, cfg.normalization)
        total = channel + C.sum(axis=0)
        V = np.where(layout.mask3, total[None, :, :] - C, 0.0)
        hard = total < 0
        count = layout.unsatisfied(hard.astype(np.uint8))
        unsatisfied.append(count)
        if history is not None:
            history.append(tuple(np.flatnonzero(hard.reshape(-1)).tolist()))
        if cfg.early_exit and count == 0:
            break

    return DecoderOutput(
        hard=hard.reshape(-1).astype(np.uint8),
        soft=np.array(total, dtype=np.float64).reshape(-1),
        unsatisfied=unsatisfied,
        history=history,
    )


def failure_indicator(E: ExponentMatrix, y: np.ndarray, cfg: DecoderConfig, channel: ChannelModel) -> int:
    """I_e(y): 1 when decoding the received word y fails under cfg.failure."""
    out = decode(E, awgn_llr(y, channel.sigma), cfg)
    if cfg.failure == FailureCriterion.NON_CODEWORD:
        return int(out.unsatisfied[-1] != 0)
    return int(out.error_support().weight > 0)


def error_boundary_distance(
    E: ExponentMatrix,
    x_ts: SupportVector,
    cfg: DecoderConfig,
    channel: ChannelModel,
    tol: float = 1e-3,
    t_max: float = 1.5,
    grid: int = 16,
) -> BoundaryDistance:
    """
    Distance from c to the failure boundary along y(t) = c - 2t * 1_supp.

    A coarse scan over ``grid`` points of (0, t_max] brackets the first
    failure, then bisection narrows it to ``tol`` in t. Returns d2 = 4*w*t^2.
    """
    if x_ts.weight == 0:
        raise ValueError("Boundary distance needs a nonzero trapping set")
    if x_ts.length != E.length:
        raise ValueError(f"Vector length {x_ts.length} does not match code length {E.length}")

    c = channel.transmitted(E.length)
    direction = 2.0 * x_ts.dense().astype(np.float64)

    def fails(t: float) -> bool:
        return bool(failure_indicator(E, c - t * direction, cfg, channel))

    ts = [t_max * (k + 1) / grid for k in range(grid)]
    outcomes = [fails(t) for t in ts]
    if not any(outcomes):
        logger.debug(f"No failure up to t={t_max} for support of weight {x_ts.weight}")
        return BoundaryDistance(d2=float("inf"), t=float("inf"), unbounded=True)

    first = outcomes.index(True)
    non_monotone = not all(outcomes[first:])
    if non_monotone:
        logger.warning(f"Non-monotone failure along the ray for support {x_ts.support[:8]}...")

    lo = 0.0 if first == 0 else ts[first - 1]
    hi = ts[first]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fails(mid):
            hi = mid
        else:
            lo = mid
    return BoundaryDistance(d2=4.0 * x_ts.weight * hi * hi, t=hi, non_monotone=non_monotone)
