"""
Importance-sampling estimation of the frame error probability P_f.

Samples are drawn around p bias points y_j^b = c - mu * x_j^b only. The
weight w(y) = z * p * R(y) / S(y) accounts for the full mixture over every
shift of every basis element; since the decoder commutes with shifts, the
reduced mixture gives the same estimate as the full one.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from qcts.decoder import failure_indicator
from qcts.decoder_models import ChannelModel, DecoderConfig
from qcts.errors import RuntimeFailure
from qcts.models import ExponentMatrix
from qcts.search_models import TsDatabase
from qcts.transforms import shift_array, shift_indices
from qcts.weighing_models import (
    BiasEnsemble, BiasMode, BiasPointStats, Denominator, PfEstimate, SampleBatch, TableSet, WeightPolicy
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 256


def make_ensemble(db: TsDatabase, mu: float, sigma: float, p_max: Optional[int] = None) -> BiasEnsemble:
    """
    Bias ensemble from the strongest records of a database.

    Records ranked by boundary distance keep that order; otherwise lower
    (w, v) classes come first.
    """
    if not db.records:
        raise ValueError("Cannot build a bias ensemble from an empty database")
    records = list(db.records)
    if all(r.d2 is not None for r in records):
        records.sort(key=lambda r: (r.d2, r.canonical_key))
    else:
        records.sort(key=lambda r: (r.v, r.w, r.canonical_key))
    if p_max is not None:
        records = records[:p_max]
    return BiasEnsemble(
        supports=[r.support for r in records], mu=mu, sigma=sigma, n=db.header.cols, z=db.header.z
    )


def build_tables(ens: BiasEnsemble, n: int, z: int) -> TableSet:
    """Set-difference tables T1/T2 and the J1/J2 partitions for every (k, l, j)."""
    if n * z != ens.length:
        raise ValueError(f"Ensemble length {ens.length} does not match n*z = {n}*{z}")
    p = ens.p
    supports = [x.array() for x in ens.supports]
    weights = np.array([x.size for x in supports], dtype=np.int64)
    shifts = np.arange(z)
    shifted = []
    for idx in supports:
        q, r = np.divmod(idx, z)
        shifted.append(np.sort(q[None, :] * z + (r[None, :] + shifts[:, None]) % z, axis=1))

    j1 = np.zeros((p, p, z), dtype=bool)
    sym_diff = np.zeros((p, p, z), dtype=np.int64)
    t1, t2 = {}, {}
    for l, B in enumerate(supports):
        member = np.zeros(ens.length, dtype=bool)
        member[B] = True
        for k in range(p):
            overlap = member[shifted[k]].sum(axis=1)
            j1[k, l] = overlap > 0
            sym_diff[k, l] = weights[k] + weights[l] - 2 * overlap
            for j in np.flatnonzero(j1[k, l]):
                A = shifted[k][j]
                t1[(k, l, int(j))] = np.setdiff1d(A, B, assume_unique=True)
                t2[(k, l, int(j))] = np.setdiff1d(B, A, assume_unique=True)

    tables = TableSet(
        p=p, z=z, n=n, weights=weights, supports=supports, shifted=shifted,
        j1=j1, sym_diff=sym_diff, t1=t1, t2=t2,
    )
    logger.debug(f"Built tables for p={p}, z={z}: {len(t1)} intersecting (k, l, j) entries")
    return tables


def table_disjointness(tables: TableSet) -> float:
    """Share of (k, l, j) whose shifted support misses the other support."""
    return float(np.count_nonzero(~tables.j1)) / tables.j1.size


def sample_generator(seed: int, l: int) -> np.random.Generator:
    """Independent stream of sample l."""
    return np.random.default_rng(np.random.SeedSequence([seed, l]))


def sample_bias_point(ens: BiasEnsemble, l: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw xi_l ~ N(0, sigma^2 I) and return (y_l, xi_l) with y_l = c - mu * x_{l mod p} + xi_l."""
    xi = rng.normal(0.0, ens.sigma, size=ens.length)
    y = np.ones(ens.length) + xi
    y[ens.supports[l % ens.p].array()] -= ens.mu
    return y, xi


def reference_delta(ens: BiasEnsemble, xi: np.ndarray) -> float:
    """Normalizing shift that puts the largest exponent of the mixture sum near 0."""
    return float(xi @ xi) / (2.0 * ens.sigma ** 2)


def _finite(value: float, what: str, allow_zero: bool = False) -> float:
    if not math.isfinite(value) or value < 0.0 or (value == 0.0 and not allow_zero):
        raise RuntimeFailure(f"{what} is {value}; the delta shift did not keep the exponent in range")
    return value


def weight_numerator(ens: BiasEnsemble, l: int, xi: np.ndarray, delta: float) -> float:
    """R = exp(-|mu x^b - xi|^2 / (2 sigma^2) + delta)."""
    diff = -np.asarray(xi, dtype=np.float64)
    diff[ens.supports[l % ens.p].array()] += ens.mu
    with np.errstate(over="ignore"):
        value = float(np.exp(-float(diff @ diff) / (2.0 * ens.sigma ** 2) + delta))
    return _finite(value, "Numerator", allow_zero=True)


def weight_denominator_naive(ens: BiasEnsemble, l: int, xi: np.ndarray, delta: float) -> float:
    """Direct sum of the z*p Gaussian kernels; reference for the tabular path."""
    xi = np.asarray(xi, dtype=np.float64)
    base = np.zeros(ens.length)
    base[ens.supports[l % ens.p].array()] = ens.mu
    total = 0.0
    for x in ens.supports:
        dense = np.zeros(ens.length)
        dense[x.array()] = ens.mu
        for j in range(ens.z):
            diff = shift_array(dense, j, ens.n, ens.z) - base + xi
            with np.errstate(over="ignore"):
                total += float(np.exp(-float(diff @ diff) / (2.0 * ens.sigma ** 2) + delta))
    return _finite(total, "Denominator")


def weight_denominator_tabular(
    ens: BiasEnsemble, tables: TableSet, l: int, xi: np.ndarray, delta: float
) -> float:
    """
    The same sum as weight_denominator_naive, split by the tables.

    Shifts in J1 use the symmetric-difference size and the partial sums of xi
    over T1 and T2. Shifts in J2 share a common term and differ only by the
    sum of xi over the shifted support.
    """
    xi = np.asarray(xi, dtype=np.float64)
    b = l % ens.p
    two_var = 2.0 * ens.sigma ** 2
    scale = ens.mu / ens.sigma ** 2
    xi_sq = float(xi @ xi)
    xi_b = float(xi[tables.supports[b]].sum())

    exponents: List[np.ndarray] = []
    for k in range(tables.p):
        j1 = tables.j1_indices(k, b)
        if j1.size:
            sums = np.array([
                xi[tables.t1[(k, b, int(j))]].sum() - xi[tables.t2[(k, b, int(j))]].sum() for j in j1
            ])
            exponents.append(
                -(xi_sq + ens.mu ** 2 * tables.sym_diff[k, b, j1]) / two_var - scale * sums + delta
            )
        j2 = tables.j2_indices(k, b)
        if j2.size:
            common = -(xi_sq + ens.mu ** 2 * (tables.weights[k] + tables.weights[b])) / two_var
            common += scale * xi_b + delta
            shifted_sums = xi[tables.shifted[k][j2]].sum(axis=1)
            exponents.append(common - scale * shifted_sums)

    with np.errstate(over="ignore"):
        total = float(np.exp(np.concatenate(exponents)).sum())
    return _finite(total, "Denominator")


def _sample(
    E: ExponentMatrix,
    ens: BiasEnsemble,
    tables: Optional[TableSet],
    cfg: DecoderConfig,
    channel: ChannelModel,
    seed: int,
    l: int,
    bias: BiasMode,
    denominator: Denominator,
    force_failure: bool,
) -> Tuple[int, int, float]:
    """One sample: (basis index, I_e, weight)."""
    rng = sample_generator(seed, l)
    if bias == BiasMode.PLAIN:
        y = np.ones(ens.length) + rng.normal(0.0, ens.sigma, size=ens.length)
        failed = 1 if force_failure else failure_indicator(E, y, cfg, channel)
        return -1, failed, 1.0

    if bias == BiasMode.FULL_ORBIT:
        point = l % (ens.z * ens.p)
        b, s = point % ens.p, point // ens.p
        xi = rng.normal(0.0, ens.sigma, size=ens.length)
        y = np.ones(ens.length) + xi
        y[shift_indices(ens.supports[b].array(), s, ens.z)] -= ens.mu
        # w is shift invariant, so weigh the unshifted image of y.
        xi = shift_array(xi, -s, ens.n, ens.z)
    else:
        b = l % ens.p
        y, xi = sample_bias_point(ens, l, rng)

    failed = 1 if force_failure else failure_indicator(E, y, cfg, channel)
    delta = reference_delta(ens, xi)
    R = weight_numerator(ens, b, xi, delta)
    if denominator == Denominator.NAIVE:
        S = weight_denominator_naive(ens, b, xi, delta)
    else:
        S = weight_denominator_tabular(ens, tables, b, xi, delta)
    return b, failed, ens.z * ens.p * R / S


def draw_samples(
    E: ExponentMatrix,
    ens: BiasEnsemble,
    cfg: DecoderConfig,
    L: int,
    seed: int,
    bias: BiasMode = BiasMode.REDUCED,
    denominator: Denominator = Denominator.TABULAR,
    policy: WeightPolicy = WeightPolicy.ABORT,
    force_failure: bool = False,
    threads: int = 1,
    progress: bool = False,
    tables: Optional[TableSet] = None,
) -> SampleBatch:
    """
    Evaluate I_e(y_l) * w(y_l) for l = 0..L-1.

    Sample l depends only on (seed, l), so a longer run extends a shorter one.

    Raises:
        RuntimeFailure: non-finite weight under the abort policy
    """
    if L < 1:
        raise ValueError(f"Sample count must be at least 1, got {L}")
    if (E.cols, E.z) != (ens.n, ens.z):
        raise ValueError(f"Ensemble is for n={ens.n}, z={ens.z}; matrix has n={E.cols}, z={E.z}")
    if bias != BiasMode.PLAIN and denominator == Denominator.TABULAR and tables is None:
        tables = build_tables(ens, ens.n, ens.z)
    channel = ChannelModel(sigma=ens.sigma)
    batch = SampleBatch(
        values=np.zeros(L), points=np.full(L, -1, dtype=np.int64),
        failed=np.zeros(L, dtype=np.int64), valid=np.ones(L, dtype=bool),
    )

    def run_block(start: int) -> int:
        for l in range(start, min(start + BLOCK_SIZE, L)):
            try:
                b, fail, w = _sample(E, ens, tables, cfg, channel, seed, l, bias, denominator, force_failure)
            except RuntimeFailure as e:
                if policy == WeightPolicy.ABORT:
                    raise RuntimeFailure(f"Sample {l}: {e}") from e
                logger.warning(f"Skipping sample {l}: {e}")
                batch.valid[l] = False
                batch.points[l] = l % ens.p
                continue
            batch.points[l], batch.failed[l], batch.values[l] = b, fail, fail * w
        return start

    starts = range(0, L, BLOCK_SIZE)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for _ in tqdm(pool.map(run_block, starts), total=len(starts), desc="samples", disable=not progress):
            pass
    return batch


def estimate_pf(
    E: ExponentMatrix,
    ens: BiasEnsemble,
    cfg: DecoderConfig,
    L: int,
    seed: int,
    bias: BiasMode = BiasMode.REDUCED,
    denominator: Denominator = Denominator.TABULAR,
    policy: WeightPolicy = WeightPolicy.ABORT,
    force_failure: bool = False,
    threads: int = 1,
    progress: bool = False,
    tables: Optional[TableSet] = None,
) -> PfEstimate:
    """
    P_f = (1/L) * sum over l of I_e(y_l) * w(y_l).

    Args:
        E: exponent matrix of the code the ensemble lives on
        ens: bias ensemble
        cfg: decoder settings, including the failure criterion
        L: number of samples
        seed: root seed; sample l uses the stream (seed, l)
        bias: reduced mixture, full-orbit mixture or plain Monte Carlo
        denominator: tabular or naive mixture sum
        policy: abort on a non-finite weight, or skip and report the sample
        force_failure: use I_e = 1 for every sample
        threads: worker threads over sample blocks
        progress: show a progress bar
        tables: prebuilt tables for ens

    Returns:
        PfEstimate with mean, standard error and per-point breakdown

    Raises:
        RuntimeFailure: non-finite weight under the abort policy, or every
            sample skipped
    """
    if bias != BiasMode.PLAIN and denominator == Denominator.TABULAR and tables is None:
        tables = build_tables(ens, ens.n, ens.z)
    batch = draw_samples(
        E, ens, cfg, L, seed, bias=bias, denominator=denominator, policy=policy,
        force_failure=force_failure, threads=threads, progress=progress, tables=tables,
    )

    used = batch.values[batch.valid]
    if used.size == 0:
        raise RuntimeFailure("Every sample was skipped for a non-finite weight")
    estimate = float(used.mean())
    stderr = float(used.std(ddof=1) / math.sqrt(used.size)) if used.size > 1 else 0.0
    failures = int(batch.failed.sum())

    per_point = []
    if bias != BiasMode.PLAIN:
        for b, x in enumerate(ens.supports):
            mine = (batch.points == b) & batch.valid
            per_point.append(BiasPointStats(
                index=b, w=x.weight, samples=int(mine.sum()), failures=int(batch.failed[mine].sum()),
                contribution=float(batch.values[mine].sum() / used.size),
            ))

    logger.info(
        f"P_f estimate {estimate:.6e} +/- {stderr:.2e} from {used.size} samples "
        f"({failures} failures, bias {bias.value})"
    )
    return PfEstimate(
        estimate=estimate, stderr=stderr, samples=L, used_samples=int(used.size),
        failures=failures, skipped=np.flatnonzero(~batch.valid).tolist(), p=ens.p, z=ens.z,
        mu=ens.mu, sigma=ens.sigma, seed=seed, bias=bias, denominator=denominator,
        failure_criterion=cfg.failure.value,
        table_disjointness=table_disjointness(tables) if tables is not None else None,
        per_point=per_point,
    )
