"""
Trapping-set search, lift-solve-project enumeration and the statistics tables.
"""
import itertools
import logging
import math
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from qcts.decoder import awgn_llr, decode, error_boundary_distance
from qcts.decoder_models import ChannelModel, DecoderConfig
from qcts.errors import IntegrityError, SizeCapError
from qcts.models import ExponentMatrix, LiftSpec, SupportVector, TsRecord
from qcts.qc_core import (
    check_variables, matrix_digest, syndrome_indices, variable_check_masks, variable_checks
)
from qcts.search_models import (
    DatabaseHeader, ImpulseKind, LiftMeta, SearchMode, SearchStrategy, TsDatabase
)
from qcts.transforms import (
    canonical_indices, derive_seed, key_bytes, lift_exponents, project_indices, random_lift_spec
)

logger = logging.getLogger(__name__)

EXHAUSTIVE_LENGTH_CAP = 24
EXHAUSTIVE_CANDIDATE_CAP = 2_000_000

WEIGHT_CHANGED = "weight_changed"
OUT_OF_BOUNDS = "out_of_bounds"


def make_record(
    idx: Iterable[int],
    v: int,
    n: int,
    z: int,
    flags: Tuple[str, ...] = (),
    d2: Optional[float] = None,
) -> TsRecord:
    """Build a record holding the canonical shift of ``idx``."""
    canonical, _ = canonical_indices(np.asarray(list(idx), dtype=np.int64), z)
    support = SupportVector.from_indices(canonical, n * z)
    return TsRecord(
        support=support, w=support.weight, v=v, canonical_key=key_bytes(canonical), flags=flags, d2=d2
    )


def _record_order(record: TsRecord) -> Tuple[int, int, bytes]:
    return record.w, record.v, record.canonical_key


def _preference(record: TsRecord) -> Tuple:
    d2 = record.d2 if record.d2 is not None else math.inf
    return len(record.flags), record.flags, d2


def dedup_orbits(records: Sequence[TsRecord], n: int, z: int) -> List[TsRecord]:
    """
    Keep one canonical representative per shift orbit.

    When several records fall in one orbit, the one with the fewest flags wins.
    Output is sorted by (w, v, canonical key).
    """
    length = n * z
    best: Dict[bytes, TsRecord] = {}
    for record in records:
        if record.support.length != length:
            raise ValueError(f"Record length {record.support.length} does not match n*z = {length}")
        canonical = make_record(record.support.support, record.v, n, z, record.flags, record.d2)
        held = best.get(canonical.canonical_key)
        if held is None or _preference(canonical) < _preference(held):
            best[canonical.canonical_key] = canonical
    return sorted(best.values(), key=_record_order)


def short_cycle_variables(E: ExponentMatrix, j: int) -> List[int]:
    """
    Variable nodes of a shortest Tanner-graph cycle through variable j.

    Breadth-first search labels every node with the root neighbour it was
    reached through; the first edge joining two different labels closes a
    cycle through j. Returns [j] when j lies on no cycle.
    """
    N = E.length

    def neighbours(node: int) -> List[int]:
        if node < N:
            return [N + c for c in variable_checks(E, node)]
        return check_variables(E, node - N)

    parent: Dict[int, Optional[int]] = {j: None}
    branch: Dict[int, Optional[int]] = {j: None}
    queue = deque([j])
    while queue:
        u = queue.popleft()
        for w in neighbours(u):
            if w == parent[u]:
                continue
            if w not in parent:
                parent[w] = u
                branch[w] = w if u == j else branch[u]
                queue.append(w)
            elif branch[w] is not None and branch[w] != branch[u]:
                nodes = set()
                for end in (u, w):
                    while end is not None:
                        nodes.add(end)
                        end = parent[end]
                return sorted(node for node in nodes if node < N)
    return [j]


def _candidate_count(N: int, w_max: int) -> int:
    return sum(math.comb(N, w) for w in range(1, min(w_max, N) + 1))


def _exhaustive(E: ExponentMatrix, strategy: SearchStrategy) -> List[TsRecord]:
    N, z, n = E.length, E.z, E.cols
    if N > EXHAUSTIVE_LENGTH_CAP and _candidate_count(N, strategy.w_max) > EXHAUSTIVE_CANDIDATE_CAP:
        raise SizeCapError(
            f"Exhaustive search is limited to n*z <= {EXHAUSTIVE_LENGTH_CAP} or at most "
            f"{EXHAUSTIVE_CANDIDATE_CAP} candidate supports; got n*z = {N} with w_max = {strategy.w_max}"
        )
    masks = variable_check_masks(E)
    records = []
    # A canonical support starts at the first position of its lowest block.
    for first in range(0, N, z):
        for w in range(1, min(strategy.w_max, N - first) + 1):
            for rest in itertools.combinations(range(first + 1, N), w - 1):
                syndrome_mask = masks[first]
                for j in rest:
                    syndrome_mask ^= masks[j]
                v = syndrome_mask.bit_count()
                if not strategy.admits(w, v):
                    continue
                idx = np.array((first,) + rest, dtype=np.int64)
                canonical, _ = canonical_indices(idx, z)
                if np.array_equal(canonical, idx):
                    records.append(make_record(idx, v, n, z))
    logger.info(f"Exhaustive search over n*z = {N}: {len(records)} orbit representatives")
    return records


def _impulse_pattern(
    E: ExponentMatrix, strategy: SearchStrategy, rng: np.random.Generator, cycles: Dict[int, List[int]]
) -> np.ndarray:
    N = E.length
    if strategy.impulse == ImpulseKind.CYCLE:
        j = int(rng.integers(N))
        if j not in cycles:
            cycles[j] = short_cycle_variables(E, j)
        cycle = np.array(cycles[j], dtype=np.int64)
        size = int(rng.integers(min(2, cycle.size), cycle.size + 1))
        return rng.choice(cycle, size=size, replace=False)
    size = int(rng.integers(1, min(strategy.impulse_weight, N) + 1))
    return rng.choice(N, size=size, replace=False)


def _impulse_trial(
    E: ExponentMatrix,
    A: np.ndarray,
    cfg: DecoderConfig,
    strategy: SearchStrategy,
    trial: int,
    cycles: Dict[int, List[int]],
) -> List[Tuple[np.ndarray, int]]:
    """Bias the channel toward one impulse pattern, decode and harvest admissible supports."""
    rng = np.random.default_rng(derive_seed(strategy.seed, trial))
    N = E.length
    pattern = _impulse_pattern(E, strategy, rng, cycles)
    y = np.ones(N)
    y[pattern] -= strategy.impulse_amplitude
    if strategy.noise_sigma > 0:
        y += rng.normal(0.0, strategy.noise_sigma, size=N)
    sigma = strategy.noise_sigma if strategy.noise_sigma > 0 else 1.0
    out = decode(E, awgn_llr(y, sigma), cfg)

    window = out.history[-strategy.harvest_window:]
    candidates = set(s for s in window if s)
    if len(candidates) > 1:
        candidates.add(tuple(sorted(set().union(*candidates))))

    harvested = []
    for support in sorted(candidates):
        idx = np.array(support, dtype=np.int64)
        v = syndrome_indices(A, E.z, idx).size
        if strategy.admits(idx.size, v):
            harvested.append((idx, v))
    return harvested


def _rank_by_boundary(
    E: ExponentMatrix, records: List[TsRecord], cfg: DecoderConfig, channel: ChannelModel
) -> List[TsRecord]:
    ranked = [
        r.model_copy(update={"d2": error_boundary_distance(E, r.support, cfg, channel).d2}) for r in records
    ]
    return sorted(ranked, key=lambda r: (r.d2, r.canonical_key))


def _finish(
    E: ExponentMatrix,
    records: List[TsRecord],
    strategy: SearchStrategy,
    cfg: DecoderConfig,
    channel: ChannelModel,
) -> List[TsRecord]:
    """Apply Strategy I ranking and the record budget; return records in file order."""
    if strategy.mode == SearchMode.STRATEGY_I:
        records = _rank_by_boundary(E, records, cfg, channel)
    else:
        records = sorted(records, key=_record_order)
    if strategy.max_records is not None:
        records = records[: strategy.max_records]
    return sorted(records, key=_record_order)


def solve(
    E: ExponentMatrix,
    cfg: DecoderConfig,
    strategy: SearchStrategy,
    threads: int = 1,
    progress: bool = False,
    channel: Optional[ChannelModel] = None,
) -> TsDatabase:
    """
    Enumerate pairwise non-equivalent trapping sets of E within the strategy bounds.

    Exhaustive mode is exact; the impulse modes are best-effort searches whose
    output depends only on (E, cfg, strategy), not on the thread count.
    """
    header = DatabaseHeader(
        rows=E.rows, cols=E.cols, z=E.z, matrix_digest=matrix_digest(E),
        strategy=strategy.describe(), seed=strategy.seed,
    )
    if strategy.mode == SearchMode.EXHAUSTIVE:
        return TsDatabase(header=header, records=_exhaustive(E, strategy))

    channel = channel or ChannelModel(sigma=1.0)
    A = E.array()
    search_cfg = cfg.model_copy(update={"track_history": True})
    cycles: Dict[int, List[int]] = {}

    def run(trial: int) -> List[Tuple[np.ndarray, int]]:
        return _impulse_trial(E, A, search_cfg, strategy, trial, cycles)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(tqdm(
            pool.map(run, range(strategy.trials)),
            total=strategy.trials, desc="impulse trials", disable=not progress,
        ))

    found: Dict[bytes, TsRecord] = {}
    for harvested in results:
        for idx, v in harvested:
            record = make_record(idx, v, E.cols, E.z)
            found.setdefault(record.canonical_key, record)
    logger.info(f"{strategy.trials} impulse trials on z={E.z} found {len(found)} orbits")

    records = _finish(E, list(found.values()), strategy, cfg, channel)
    return TsDatabase(header=header, records=records)


def projection_diff_table(
    lifted_db: TsDatabase, E: ExponentMatrix
) -> Dict[Tuple[int, int], int]:
    """
    Histogram of (w - w', v - v') when every lifted record is projected onto E.

    Raises:
        IntegrityError: when the database cannot come from a lift of E
    """
    header = lifted_db.header
    if (header.rows, header.cols) != (E.rows, E.cols):
        raise IntegrityError(
            f"Lifted database is {header.rows}x{header.cols} blocks, base matrix is {E.rows}x{E.cols}"
        )
    if header.z <= E.z or header.z % E.z != 0:
        raise IntegrityError(f"Lifted circulant {header.z} is not a proper multiple of base circulant {E.z}")
    if header.base_digest is not None and header.base_digest != matrix_digest(E):
        raise IntegrityError(
            f"Database was lifted from matrix {header.base_digest}, base matrix is {matrix_digest(E)}"
        )

    A = E.array()
    hist: Counter = Counter()
    for record in lifted_db.records:
        projected = project_indices(record.support.array(), header.z, E.z)
        v_p = syndrome_indices(A, E.z, projected).size
        hist[(record.w - projected.size, record.v - v_p)] += 1

    odd = [key for key in hist if key[0] % 2 or key[1] % 2]
    if odd:
        raise IntegrityError(f"Odd class changes {sorted(odd)}: base matrix is not a projection of the lift")
    return dict(sorted(hist.items()))


def _project_records(
    lifted_db: TsDatabase, E: ExponentMatrix, A: np.ndarray, strategy: SearchStrategy
) -> List[TsRecord]:
    projected_records = []
    dropped = 0
    for record in lifted_db.records:
        projected = project_indices(record.support.array(), lifted_db.header.z, E.z)
        if projected.size == 0:
            dropped += 1
            continue
        v_p = syndrome_indices(A, E.z, projected).size
        flags: Tuple[str, ...] = ()
        if projected.size != record.w:
            flags += (WEIGHT_CHANGED,)
            if not strategy.admits(projected.size, v_p):
                flags += (OUT_OF_BOUNDS,)
        projected_records.append(make_record(projected, v_p, E.cols, E.z, flags))
    if dropped:
        logger.debug(f"{dropped} records projected to the zero vector")
    return projected_records


def enumerate_qc(
    E: ExponentMatrix,
    n_lifts: int,
    strategy: SearchStrategy,
    cfg: DecoderConfig,
    seed: int,
    factor: int = 2,
    lift_specs: Optional[List[LiftSpec]] = None,
    threads: int = 1,
    progress: bool = False,
    channel: Optional[ChannelModel] = None,
) -> TsDatabase:
    """
    Lift, solve, project and merge.

    Args:
        E: base exponent matrix
        n_lifts: number of seeded lifts when ``lift_specs`` is not given
        strategy: search strategy for every lifted matrix
        cfg: decoder settings
        seed: root seed for the lift matrices B_j
        factor: lift factor l
        lift_specs: explicit lifts; duplicates are processed once
        threads: worker threads shared by the lifts and the solves inside them
        progress: show progress bars
        channel: channel used for Strategy I boundary distances

    Returns:
        TsDatabase of E; records whose projection lost weight carry the
        ``weight_changed`` flag
    """
    if lift_specs is None:
        if n_lifts < 1:
            raise ValueError(f"At least one lift is required, got {n_lifts}")
        lift_specs = [random_lift_spec(E.rows, E.cols, factor, derive_seed(seed, j)) for j in range(n_lifts)]

    unique_specs: List[LiftSpec] = []
    seen_digests = set()
    for spec in lift_specs:
        if spec.digest() in seen_digests:
            logger.warning(f"Skipping duplicate lift with B digest {spec.digest()}")
            continue
        seen_digests.add(spec.digest())
        unique_specs.append(spec)

    channel = channel or ChannelModel(sigma=1.0)
    A = E.array()
    base_digest = matrix_digest(E)
    # Ranking and the record budget apply to the merged base records only.
    per_lift = strategy.model_copy(update={"max_records": None})
    if per_lift.mode == SearchMode.STRATEGY_I:
        per_lift = per_lift.model_copy(update={"mode": SearchMode.STRATEGY_II})
    workers = max(1, min(threads, len(unique_specs)))
    inner_threads = max(1, threads // workers)

    def run_lift(item: Tuple[int, LiftSpec]) -> Tuple[Dict[Tuple[int, int], int], List[TsRecord]]:
        j, spec = item
        lifted = lift_exponents(E, spec)
        sub_strategy = per_lift.model_copy(update={"seed": derive_seed(strategy.seed, j)})
        logger.info(f"Lift {j}: z={lifted.z}, B digest {spec.digest()}")
        lifted_db = solve(lifted, cfg, sub_strategy, threads=inner_threads, channel=channel)
        lifted_db.header.base_digest = base_digest
        return projection_diff_table(lifted_db, E), _project_records(lifted_db, E, A, strategy)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(tqdm(
            pool.map(run_lift, enumerate(unique_specs)),
            total=len(unique_specs), desc="lifts", disable=not progress,
        ))

    merged: List[TsRecord] = []
    diffs: Counter = Counter()
    lifts_meta = []
    for j, (spec, (lift_diffs, projected)) in enumerate(zip(unique_specs, results)):
        diffs.update(lift_diffs)
        merged.extend(projected)
        lifts_meta.append(LiftMeta(index=j, factor=spec.factor, seed=spec.seed, bits_digest=spec.digest()))

    records = dedup_orbits(merged, E.cols, E.z)
    flagged = sum(1 for r in records if r.flags)
    if flagged:
        logger.warning(f"{flagged} merged records changed weight under projection")
    records = _finish(E, records, strategy, cfg, channel)
    logger.info(f"Merged {len(merged)} projected records into {len(records)} orbits")

    header = DatabaseHeader(
        rows=E.rows, cols=E.cols, z=E.z, matrix_digest=base_digest, strategy=strategy.describe(),
        seed=seed, lifts=lifts_meta, lifted_z=unique_specs[0].factor * E.z if unique_specs else None,
    )
    return TsDatabase(header=header, records=records, projection_diffs=dict(sorted(diffs.items())))


def distribution_table(
    db: TsDatabase, w_max: Optional[int] = None, v_max: Optional[int] = None
) -> np.ndarray:
    """Counts per (w, v) class; rows are w, columns are v, both from 0."""
    counts = db.class_counts()
    W = w_max if w_max is not None else max((w for w, _ in counts), default=0)
    V = v_max if v_max is not None else max((v for _, v in counts), default=0)
    table = np.zeros((W + 1, V + 1), dtype=np.int64)
    for (w, v), count in counts.items():
        if w <= W and v <= V:
            table[w, v] = count
    return table


def class_conversion_share(diffs: Dict[Tuple[int, int], int]) -> float:
    """Share of records whose class changes as (w, v) -> (w, v) or (w, v - 2)."""
    total = sum(diffs.values())
    if total == 0:
        return 0.0
    return (diffs.get((0, 0), 0) + diffs.get((0, 2), 0)) / total
