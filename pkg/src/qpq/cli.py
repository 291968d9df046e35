"""Command-line driver: ``qpq run | attack-eval | sweep | qram-verify``.

Every report is a JSON document (or a CSV table) carrying the schema version,
the package version, the fully resolved configuration, the seed and the
design flags in effect.  Floats are written with 12 significant digits and
nothing time- or host-dependent is recorded, so a fixed configuration always
reproduces the same bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .adversary import (
    SCENARIOS,
    AttackStrategy,
    ProjectiveStrategy,
    assess_attack,
    check_caps,
    parse_angle,
    parse_strategy,
)
from .analysis import (
    bob_information,
    complexity_report,
    default_grid,
    epsilon_of,
    fidelity_gap_of,
    monte_carlo_detection,
    sigma_star_of,
    tradeoff_sweep,
    CI_CONFIDENCE,
    P_J_CONVENTION,
    SIGMA_STAR_CONVENTION,
)
from .errors import CapExceededError, QPQError
from .protocol import Variant, comm_cost, plan_query, transcript_only
from .qram import Database, gate_count, generate_database, load_database, oracle_direct, oracle_via_unary
from .quantum_core import RegisterLayout, random_state

SCHEMA_VERSION = 1
SIG_DIGITS = 12
MAX_N_QRAM = 6


class UsageError(QPQError, ValueError):
    kind = "usage"


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class VariantSpec:
    variant: Variant
    alpha: complex | None = None
    beta: complex | None = None
    k: int | None = None

    def to_dict(self):
        d = {"name": self.variant.value}
        if self.alpha is not None:
            d["alpha"] = [self.alpha.real, self.alpha.imag]
            d["beta"] = [self.beta.real, self.beta.imag]
        if self.k is not None:
            d["k"] = self.k
        return d


def parse_variant(text: str) -> VariantSpec:
    """``basic``, ``amp:<a_re,a_im,b_re,b_im>`` or ``two-query:<k>``."""
    kind, _, arg = text.partition(":")
    if kind == "basic" and not arg:
        return VariantSpec(Variant.BASIC)
    if kind == "amp":
        try:
            a_re, a_im, b_re, b_im = (float(x) for x in arg.split(","))
        except ValueError:
            raise UsageError(f"amp variant needs four comma-separated reals, got {arg!r}") from None
        return VariantSpec(Variant.AMPLITUDE, complex(a_re, a_im), complex(b_re, b_im))
    if kind == "two-query":
        try:
            return VariantSpec(Variant.TWO_QUERY, k=int(arg))
        except ValueError:
            raise UsageError(f"two-query variant needs an integer k, got {arg!r}") from None
    raise UsageError(f"unknown variant {text!r}")


def resolve_database(args) -> tuple[Database, dict]:
    if args.db is not None and args.gen_db is not None:
        raise UsageError("give either --db or --gen-db, not both")
    if args.db is not None:
        db = load_database(args.db)
        if args.n is not None and args.n != db.n:
            raise UsageError(f"--n {args.n} does not match the database width n={db.n}")
        return db, {"path": args.db, "n": db.n, "records": db.to_text().split()[1]}
    if args.gen_db is not None:
        if args.n is None:
            raise UsageError("--gen-db needs --n")
        db = generate_database(args.n, np.random.default_rng(args.gen_db))
        return db, {"generator_seed": args.gen_db, "n": db.n, "records": db.to_text().split()[1]}
    raise UsageError("a database is required: use --db <path> or --gen-db <seed> with --n")


def resolve_strategy(spec: str) -> AttackStrategy:
    try:
        return parse_strategy(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def design_flags(strategy: AttackStrategy | None = None) -> dict:
    timing = "strict"
    if isinstance(strategy, ProjectiveStrategy) and not strategy.causal:
        timing = "paper (retroactive repair of the first reply)"
    return {
        "timing_mode": timing,
        "p_j_convention": P_J_CONVENTION,
        "sigma_star_convention": SIGMA_STAR_CONVENTION,
        "total_qubits_counts": "queries sent to Bob only; leg_qubits counts both directions",
        "record_order": "character i of the record line is A_i",
    }


# --- serialization -------------------------------------------------------------


def _round(x):
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return float(f"{x:.{SIG_DIGITS}g}")
    return x


def _fmt(x):
    x = _round(x)
    return repr(x) if isinstance(x, float) else str(x)


def to_json(report: dict) -> str:
    return json.dumps(_round(report), indent=2, sort_keys=False) + "\n"


def to_csv(report: dict, rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={report['schema_version']} command={report['command']} "
              f"version={report['artifact']['version']} seed={report['seed']}\n")
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rows[0].keys())
        for row in rows:
            w.writerow(_fmt(v) for v in row.values())
    return buf.getvalue()


def envelope(command: str, config: dict, seed, strategy=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "artifact": {"name": "qpq", "version": __version__},
        "config": config,
        "seed": seed,
        "design_flags": design_flags(strategy),
    }


# --- commands ------------------------------------------------------------------


def cmd_run(args) -> tuple[dict, list[dict]]:
    """Sampled sessions: answer correctness, detection rate with a confidence interval."""
    db, db_cfg = resolve_database(args)
    strategy = resolve_strategy(args.strategy)
    variant = parse_variant(args.variant)
    if args.j is None:
        raise UsageError("run needs --j")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    kw = dict(k=variant.k, alpha=variant.alpha, beta=variant.beta)
    # validate the plan once so errors surface before the loop
    probe = plan_query(args.j, db.n, np.random.default_rng(0), variant.variant, **kw)
    count = monte_carlo_detection(strategy, db, args.j, args.trials, args.seed, variant.variant, **kw)
    detections = count.detections
    low, high = count.interval(CI_CONFIDENCE)
    cost = comm_cost(transcript_only(db, probe, strategy))
    result = {
        "trials": args.trials,
        "detections": detections,
        "detection_rate": detections / args.trials,
        "detection_ci": {"confidence": CI_CONFIDENCE, "method": "wilson", "low": low, "high": high},
        "answer_correct_rate": count.correct_answers / args.trials,
        "transcript": asdict(cost),
        "complexity": asdict(complexity_report(db.n)),
    }
    config = {"db": db_cfg, "j": args.j, "variant": variant.to_dict(), "strategy": strategy.name,
              "trials": args.trials}
    report = envelope("run", config, args.seed, strategy)
    report["result"] = result
    row = {"strategy": strategy.name, "n": db.n, "j": args.j, "trials": args.trials,
           "detections": detections, "detection_rate": result["detection_rate"],
           "ci_low": low, "ci_high": high, "answer_correct_rate": result["answer_correct_rate"],
           "total_qubits": cost.total_qubits, "db_calls": cost.db_calls}
    return report, [row]


def cmd_attack_eval(args) -> tuple[dict, list[dict]]:
    """Exact per-(scenario, j) pass probabilities, epsilon, Holevo bits and detection."""
    db, db_cfg = resolve_database(args)
    strategy = resolve_strategy(args.strategy)
    if parse_variant(args.variant).variant is not Variant.BASIC:
        raise UsageError("exact attack evaluation is defined for the basic variant only")
    check_caps(strategy, db.n)
    a = assess_attack(strategy, db)
    rows, per_query = [], []
    for s in SCENARIOS:
        for j in a.queries:
            p = a.pass_probability(s, j)
            rows.append({"scenario": s, "j": j, "pass_probability": p, "fail_probability": 1.0 - p})
    for j in a.queries:
        det = 1.0 - 0.5 * sum(a.pass_probability(s, j) for s in SCENARIOS)
        per_query.append({"j": j, "detection_probability": det})
    if args.j is not None and args.j not in a.queries:
        raise UsageError(f"query j={args.j} outside 1..{db.N - 1}")
    star = sigma_star_of(strategy, db, a)
    result = {
        "entries": rows,
        "detection_by_query": per_query,
        "detection_probability": float(np.mean([q["detection_probability"] for q in per_query])),
        "epsilon": epsilon_of(strategy, db, a),
        "fidelity_gap": fidelity_gap_of(strategy, db, a, star),
        "holevo_bits": bob_information(strategy, db, a),
        "ancilla_dim": strategy.ancilla_dim(db.n),
    }
    if args.j is not None:
        result["detection_probability_j"] = per_query[args.j - 1]["detection_probability"]
    if args.verbose:
        result["sigma_star"] = {"real": star.matrix.real.tolist(), "imag": star.matrix.imag.tolist()}
    config = {"db": db_cfg, "j": args.j, "variant": "basic", "strategy": strategy.name}
    report = envelope("attack-eval", config, args.seed, strategy)
    report["result"] = result
    return report, rows


def parse_thetas(text: str) -> list[float]:
    try:
        return [parse_angle(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args) -> tuple[dict, list[dict]]:
    """Coupling-attack grid with fitted bound constants."""
    db, db_cfg = resolve_database(args)
    if args.thetas is not None:
        grid = parse_thetas(args.thetas)
        if not grid:
            raise UsageError("--thetas is empty")
    else:
        grid = default_grid(args.grid_points)
    tr = tradeoff_sweep(grid, db)
    d = tr.to_dict(verbose=args.verbose)
    config = {"db": db_cfg, "strategy": "coupling", "thetas": grid}
    report = envelope("sweep", config, args.seed)
    report["result"] = d
    rows = [{k: v for k, v in p.items() if k != "sigma_star"} for p in d["points"]]
    return report, rows


def cmd_qram_verify(args) -> tuple[dict, list[dict]]:
    """Direct vs unary-addressed lookup on Haar-random states, plus gate counts."""
    if args.n is None or args.n < 1:
        raise UsageError("qram-verify needs --n >= 1")
    upto = args.counts_up_to if args.counts_up_to is not None else args.n
    table = [asdict(gate_count(m)) | {"ratio": gate_count(m).ratio} for m in range(1, upto + 1)]
    rows = []
    if not args.counts_only:
        if args.n > MAX_N_QRAM:
            raise CapExceededError(f"qram simulation is limited to n <= {MAX_N_QRAM}", "n", args.n, MAX_N_QRAM)
        if args.states < 1:
            raise UsageError("--states must be at least 1")
        rng = np.random.default_rng(args.seed)
        for m in range(1, args.n + 1):
            db = generate_database(m, rng)
            layout = RegisterLayout.of(("Q", db.N), ("R", 2))
            dev = inv = norm = 0.0
            for _ in range(args.states):
                psi = random_state(layout, rng)
                a = oracle_direct(psi, db)
                b = oracle_via_unary(psi, db)
                dev = max(dev, float(np.max(np.abs(a.amplitudes - b.amplitudes))))
                inv = max(inv, float(np.max(np.abs(oracle_direct(a, db).amplitudes - psi.amplitudes))),
                          float(np.max(np.abs(oracle_via_unary(b, db).amplitudes - psi.amplitudes))))
                norm = max(norm, abs(np.linalg.norm(a.amplitudes) - 1.0), abs(np.linalg.norm(b.amplitudes) - 1.0))
            rows.append({"n": m, "states": args.states, "max_deviation": dev,
                         "involution_deviation": inv, "norm_deviation": norm})
    result = {"verification": rows, "gate_counts": table}
    if rows:
        result["max_deviation"] = max(r["max_deviation"] for r in rows)
        result["max_involution_deviation"] = max(r["involution_deviation"] for r in rows)
    config = {"n": args.n, "states": args.states, "counts_up_to": upto, "counts_only": args.counts_only}
    report = envelope("qram-verify", config, args.seed)
    report["result"] = result
    return report, rows if rows else table


COMMANDS = {
    "run": cmd_run,
    "attack-eval": cmd_attack_eval,
    "sweep": cmd_sweep,
    "qram-verify": cmd_qram_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, help="address width")
    common.add_argument("--db", help="database file (n=<int> header, record line)")
    common.add_argument("--gen-db", type=int, metavar="SEED", help="generate a random database with this seed")
    common.add_argument("--j", type=int, help="query index")
    common.add_argument("--variant", default="basic",
                        help="basic | amp:<a_re,a_im,b_re,b_im> | two-query:<k>")
    common.add_argument("--strategy", default="honest",
                        help="honest | projective:paper | projective:strict | coupling:<theta>")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--verbose", action="store_true", help="include matrix dumps")

    p = argparse.ArgumentParser(prog="qpq", description="Quantum private query simulator")
    p.add_argument("--version", action="version", version=f"qpq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="sampled protocol sessions")
    sub.add_parser("attack-eval", parents=[common], help="exact attack assessment")
    sw = sub.add_parser("sweep", parents=[common], help="coupling information-disturbance sweep")
    sw.add_argument("--thetas", help="comma-separated angles, e.g. 0,pi/8,pi/4")
    sw.add_argument("--grid-points", type=int, default=9, help="evenly spaced angles on [0, pi/2]")
    qv = sub.add_parser("qram-verify", parents=[common], help="check the unary-addressed lookup")
    qv.add_argument("--states", type=int, default=100, help="Haar-random states per width")
    qv.add_argument("--counts-up-to", type=int, help="gate-count table up to this width")
    qv.add_argument("--counts-only", action="store_true", help="skip simulation, print counts only")
    return p


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def _error(exc: Exception) -> dict:
    if isinstance(exc, QPQError):
        return exc.to_dict()
    if isinstance(exc, _ArgumentError):
        return {"type": "usage", "message": str(exc)}
    if isinstance(exc, OSError):
        return {"type": "file", "message": f"{exc.strerror}: {exc.filename}"}
    return {"type": "value", "message": str(exc)}


def main(argv=None) -> int:
    parser = build_parser()
    # route argparse failures through the JSON error path
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.__class__ = _Parser
    parser.__class__ = _Parser
    try:
        args = parser.parse_args(argv)
        report, rows = COMMANDS[args.command](args)
        text = to_json(report) if args.format == "json" else to_csv(report, rows)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    except (QPQError, ValueError, OSError, _ArgumentError) as exc:
        sys.stderr.write(json.dumps({"error": _error(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
