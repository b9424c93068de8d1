"""
Command-line surface: project, lift, enumerate, classify, weigh and stats.

Exit codes: 0 success, 1 usage, 2 input integrity, 3 runtime failure.
"""
import argparse
import json
import logging
import os
import sys
import time
from typing import Dict, List, Optional

from qcts import __version__
from qcts.decoder_models import DecoderConfig, FailureCriterion
from qcts.errors import QctsError, UsageError
from qcts.models import SupportVector
from qcts.qc_core import classify_ts, expand_dense, matrix_digest
from qcts.search_models import ImpulseKind, SearchMode, SearchStrategy
from qcts.storage import (
    RunManifest, atomic_write, diff_csv, distribution_csv, file_digest, format_diffs,
    format_distribution, read_database, read_matrix, write_database, write_manifest,
    write_matrix, write_report
)
from qcts.transforms import canonical_form, lift_exponents, project_exponents, random_lift_spec
from qcts.ts_search import enumerate_qc, distribution_table, projection_diff_table, solve, class_conversion_share
from qcts.weighing import build_tables, estimate_pf, make_ensemble
from qcts.weighing_models import BiasMode, Denominator, WeightPolicy

logger = logging.getLogger(__name__)

FAILURE_FLAGS = {"noncode": FailureCriterion.NON_CODEWORD, "nontx": FailureCriterion.NOT_TRANSMITTED}
STRATEGY_FLAGS = {
    "exhaustive": (SearchMode.EXHAUSTIVE, ImpulseKind.RANDOM),
    "impulse": (SearchMode.STRATEGY_II, ImpulseKind.RANDOM),
    "cycle": (SearchMode.STRATEGY_II, ImpulseKind.CYCLE),
}
# Flags that do not change any output byte.
_NON_DETERMINING = {"func", "threads", "log_level", "progress"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}")


def _manifest(args: argparse.Namespace, inputs: Dict[str, str], seeds: List[int]) -> RunManifest:
    flags = {k: v for k, v in vars(args).items() if k not in _NON_DETERMINING}
    return RunManifest(
        command=args.command, args=flags, seeds=seeds,
        input_digests={path: file_digest(path) for path in inputs.values()},
        threads=args.threads,
    )


def _decoder_config(args: argparse.Namespace) -> DecoderConfig:
    return DecoderConfig(
        iterations=args.iters, normalization=args.norm_factor, failure=FAILURE_FLAGS[args.failure]
    )


def _strategy(args: argparse.Namespace) -> SearchStrategy:
    mode, impulse = STRATEGY_FLAGS[args.strategy]
    if args.rank_boundary:
        if mode == SearchMode.EXHAUSTIVE:
            raise UsageError("--rank-boundary applies to the impulse strategies only")
        mode = SearchMode.STRATEGY_I
    return SearchStrategy(
        mode=mode, impulse=impulse, w_max=args.wmax, v_scale=args.v_scale, v_offset=args.v_offset,
        v_max=args.vmax, trials=args.trials, impulse_amplitude=args.impulse_amplitude,
        max_records=args.max_records, seed=args.seed,
    )


def cmd_project(args: argparse.Namespace) -> int:
    start = time.monotonic()
    E = read_matrix(args.input)
    projected = project_exponents(E, args.z_star)
    write_matrix(args.out, projected)
    manifest = _manifest(args, {"input": args.input}, [])
    manifest.wall_clock = time.monotonic() - start
    write_manifest(args.out, manifest)
    print(f"projected z={E.z} -> z*={args.z_star}: {matrix_digest(projected)}")
    return 0


def cmd_lift(args: argparse.Namespace) -> int:
    start = time.monotonic()
    if args.factor < 2:
        raise UsageError(f"Lift factor must be greater than 1, got {args.factor}")
    E = read_matrix(args.input)
    spec = random_lift_spec(E.rows, E.cols, args.factor, args.seed)
    lifted = lift_exponents(E, spec)
    write_matrix(args.out, lifted)
    manifest = _manifest(args, {"input": args.input}, [args.seed])
    manifest.args["lift_digest"] = spec.digest()
    manifest.args["lift_bits"] = [list(row) for row in spec.bits]
    manifest.wall_clock = time.monotonic() - start
    write_manifest(args.out, manifest)
    print(f"lifted z={E.z} -> z={lifted.z}, B digest {spec.digest()}")
    return 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    start = time.monotonic()
    E = read_matrix(args.input)
    cfg = _decoder_config(args)
    strategy = _strategy(args)
    manifest = _manifest(args, {"input": args.input}, [args.seed])

    if args.lifts == 0:
        db = solve(E, cfg, strategy, threads=args.threads, progress=args.progress)
    else:
        db = enumerate_qc(
            E, args.lifts, strategy, cfg, args.seed, factor=args.factor,
            threads=args.threads, progress=args.progress,
        )
    db.header.manifest_digest = manifest.digest()
    digest = write_database(args.out, db)
    manifest.wall_clock = time.monotonic() - start
    write_manifest(args.out, manifest)

    print(format_distribution(distribution_table(db, w_max=strategy.w_max)))
    if db.header.lifts:
        print()
        print(format_diffs(db.projection_diffs))
        print(f"(0,0) and (0,2) share: {100.0 * class_conversion_share(db.projection_diffs):.6f}%")
    print(f"{len(db.records)} records, database digest {digest}")
    return 0


def _parse_support(text: str) -> List[int]:
    text = text.strip()
    if text.startswith("["):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"Support is not a JSON array: {e}")
    else:
        values = [t for t in text.split(",") if t.strip()]
    try:
        return [int(v) for v in values]
    except (TypeError, ValueError):
        raise UsageError(f"Support entries must be integers: {text!r}")


def cmd_classify(args: argparse.Namespace) -> int:
    E = read_matrix(args.input)
    x = SupportVector.from_unsorted(_parse_support(args.support), E.length)
    w, v = classify_ts(E, x)
    key, s = canonical_form(x, E.cols, E.z)
    print(f"w={w} v={v} shift={s} key={key.hex()}")
    if args.dense_check:
        H = expand_dense(E)
        dense_v = int(((H @ x.dense().astype(int)) % 2).sum())
        if dense_v != v:
            raise QctsError(f"Dense expansion gives v={dense_v}, exponent arithmetic gives v={v}")
        print("dense check passed")
    return 0


def cmd_weigh(args: argparse.Namespace) -> int:
    start = time.monotonic()
    if args.samples < 1:
        raise UsageError(f"--samples must be at least 1, got {args.samples}")
    E = read_matrix(args.matrix)
    db = read_database(args.db, E)
    cfg = _decoder_config(args)
    ens = make_ensemble(db, args.mu, args.sigma, args.ensemble_size)
    bias = BiasMode(args.bias)
    denominator = Denominator.NAIVE if args.oracle else Denominator.TABULAR
    tables = build_tables(ens, ens.n, ens.z) if bias != BiasMode.PLAIN else None

    manifest = _manifest(args, {"matrix": args.matrix, "db": args.db}, [args.seed])
    estimate = estimate_pf(
        E, ens, cfg, args.samples, args.seed, bias=bias, denominator=denominator,
        policy=WeightPolicy(args.policy), threads=args.threads, progress=args.progress, tables=tables,
    )
    write_report(args.out, estimate, manifest.digest())
    manifest.wall_clock = time.monotonic() - start
    write_manifest(args.out, manifest)
    print(f"P_f = {estimate.estimate:.6e} +/- {estimate.stderr:.2e} ({estimate.failures} failures)")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    db = read_database(args.db)
    if args.diffs:
        if args.base is None:
            raise UsageError("Difference statistics need the base matrix (--base)")
        text = diff_csv(projection_diff_table(db, read_matrix(args.base)))
    else:
        text = distribution_csv(distribution_table(db))

    if args.out is None:
        sys.stdout.write(text)
        return 0
    with atomic_write(args.out) as handle:
        handle.write(text)
    inputs = {"db": args.db} if args.base is None else {"db": args.db, "base": args.base}
    write_manifest(args.out, _manifest(args, inputs, []))
    return 0


def _add_decoder_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iters", type=int, default=20, help="Maximum decoder iterations")
    parser.add_argument("--norm-factor", type=float, default=0.75, help="Min-sum normalization factor")
    parser.add_argument("--failure", choices=sorted(FAILURE_FLAGS), default="nontx", help="Failure criterion")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcts", description="Trapping sets and error floors of QC-LDPC codes")
    parser.add_argument("--version", action="version", version=f"qcts {__version__}")
    parser.add_argument("--threads", type=int, default=_env_int("QCTS_THREADS", 1), help="Worker threads")
    parser.add_argument("--log-level", default=os.getenv("QCTS_LOG_LEVEL", "INFO"), help="Logging level")
    parser.add_argument(
        "--progress", action="store_true", default=bool(_env_int("QCTS_PROGRESS", 0)), help="Show progress bars"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("project", help="Project an exponent matrix to a smaller circulant")
    p.add_argument("input", help="Exponent matrix file")
    p.add_argument("--z-star", type=int, required=True, help="Target circulant size")
    p.add_argument("--out", required=True, help="Output matrix file")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("lift", help="Lift an exponent matrix with a seeded B")
    p.add_argument("input", help="Exponent matrix file")
    p.add_argument("--factor", type=int, default=2, help="Lift factor l")
    p.add_argument("--seed", type=int, default=0, help="Seed for B")
    p.add_argument("--out", required=True, help="Output matrix file")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("enumerate", help="Enumerate trapping sets by lift, solve and project")
    p.add_argument("input", help="Exponent matrix file")
    p.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), default="impulse", help="Solver")
    p.add_argument("--lifts", type=int, default=4, help="Number of lifts; 0 solves the input directly")
    p.add_argument("--factor", type=int, default=2, help="Lift factor l")
    p.add_argument("--seed", type=int, default=0, help="Root seed")
    p.add_argument("--wmax", type=int, default=8, help="Largest weight w")
    p.add_argument("--vmax", type=int, default=None, help="Hard cap on v")
    p.add_argument("--v-scale", type=float, default=1.0, help="Bound v(w) = floor(v_scale*w) + v_offset")
    p.add_argument("--v-offset", type=int, default=0, help="Bound offset")
    p.add_argument("--trials", type=int, default=1000, help="Impulse trials per solve")
    p.add_argument("--impulse-amplitude", type=float, default=1.5, help="Impulse displacement")
    p.add_argument("--rank-boundary", action="store_true", help="Rank by error boundary distance")
    p.add_argument("--max-records", type=int, default=None, help="Keep only the best records")
    p.add_argument("--out", required=True, help="Output TS database")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("classify", help="Classify a support against a matrix")
    p.add_argument("input", help="Exponent matrix file")
    p.add_argument("support", help="JSON array or comma-separated indices")
    p.add_argument("--dense-check", action="store_true", help="Cross-check against the dense matrix")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("weigh", help="Estimate P_f by importance sampling")
    p.add_argument("matrix", help="Exponent matrix file")
    p.add_argument("db", help="TS database of the matrix")
    p.add_argument("--mu", type=float, default=1.7, help="Bias displacement")
    p.add_argument("--sigma", type=float, required=True, help="Noise standard deviation")
    p.add_argument("--samples", type=int, default=10000, help="Samples L")
    p.add_argument("--seed", type=int, default=0, help="Sampling seed")
    p.add_argument("--ensemble-size", type=int, default=None, help="Largest basis size p")
    p.add_argument("--bias", choices=[b.value for b in BiasMode], default=BiasMode.REDUCED.value)
    p.add_argument("--oracle", action="store_true", help="Use the naive denominator")
    p.add_argument("--policy", choices=[w.value for w in WeightPolicy], default=WeightPolicy.ABORT.value)
    p.add_argument("--out", required=True, help="Output JSON report")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_weigh)

    p = sub.add_parser("stats", help="CSV tables of a TS database")
    p.add_argument("db", help="TS database")
    p.add_argument("--base", default=None, help="Base matrix for the difference table")
    p.add_argument("--diffs", action="store_true", help="Emit (w-w', v-v') frequencies")
    p.add_argument("--out", default=None, help="Output CSV; stdout when omitted")
    p.set_defaults(func=cmd_stats)
    return parser


def _one_line(error: Exception) -> str:
    return "; ".join(line.strip() for line in str(error).splitlines() if line.strip())


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except QctsError as e:
        print(f"error: {_one_line(e)}", file=sys.stderr)
        return e.exit_code

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except QctsError as e:
        print(f"error: {_one_line(e)}", file=sys.stderr)
        return e.exit_code
    except ValueError as e:
        print(f"error: {_one_line(e)}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {_one_line(e)}", file=sys.stderr)
        return 3
