"""Security metrics: detection rates, the information-disturbance sweep, cost tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .adversary import (
    SCENARIOS,
    AttackAssessment,
    AttackStrategy,
    CouplingStrategy,
    assess_attack,
    coupling_attack,
    sample_attack_run,
    simulate_attack_exact,
)
from .errors import CapExceededError
from .protocol import Variant, plan_query
from .qram import Database, GateCountReport, gate_count
from .quantum_core import DensityMatrix, Ensemble, RegisterLayout, fidelity, holevo_chi, mix

MAX_N_COUPLING = 3
# epsilon at or below this is treated as zero when fitting bound constants
EPS_ZERO = 1e-12
NULL_TOL = 1e-8
# two-sided coverage matching a 3-sigma band
CI_CONFIDENCE = 0.997

P_J_CONVENTION = "uniform over admissible queries 1..N-1 (record 0 is the public reference)"
SIGMA_STAR_CONVENTION = "uniform average of sigma_l(j) over scenarios and admissible j"


@dataclass(frozen=True)
class MonteCarlo:
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("Monte-Carlo estimate needs at least one trial")


@dataclass(frozen=True)
class DetectionCount:
    trials: int
    detections: int
    correct_answers: int

    @property
    def rate(self) -> float:
        return self.detections / self.trials

    def sigma(self, p: float | None = None) -> float:
        """Binomial standard error at ``p`` (default: the observed rate)."""
        p = self.rate if p is None else p
        return math.sqrt(p * (1 - p) / self.trials)

    def within(self, p: float, k: float = 3.0) -> bool:
        return abs(self.rate - p) <= k * self.sigma(p)

    def interval(self, confidence: float = CI_CONFIDENCE) -> tuple[float, float]:
        """Wilson score interval for the detection rate."""
        ci = binomtest(self.detections, self.trials).proportion_ci(confidence, method="wilson")
        return float(ci.low), float(ci.high)


def monte_carlo_detection(
    strategy: AttackStrategy, db: Database, j: int, trials: int, seed: int, variant=Variant.BASIC, **plan_kw
) -> DetectionCount:
    """Sampled sessions with fresh random plan choices each time.

    ``plan_kw`` is forwarded to :func:`plan_query` (fixed ``k``, ``alpha``, ``beta``).
    """
    if trials < 1:
        raise ValueError("Monte-Carlo estimate needs at least one trial")
    rng = np.random.default_rng(seed)
    detections = correct = 0
    for _ in range(trials):
        plan = plan_query(j, db.n, rng, variant, **plan_kw)
        outcome = sample_attack_run(strategy, db, plan, rng)
        detections += outcome.detected_cheating
        correct += outcome.answer == db[j]
    return DetectionCount(trials, detections, correct)


def detection_probability(strategy: AttackStrategy, db: Database, j: int, method="exact") -> float:
    """Probability that Alice catches Bob on query ``j``, scenarios equally likely."""
    if method == "exact":
        return 1.0 - 0.5 * sum(simulate_attack_exact(strategy, db, j, s).pass_probability for s in SCENARIOS)
    if isinstance(method, MonteCarlo):
        return monte_carlo_detection(strategy, db, j, method.trials, method.seed).rate
    raise ValueError(f"unknown method {method!r}")


def _assessment(strategy, db, assessment):
    return assess_attack(strategy, db) if assessment is None else assessment


def epsilon_of(strategy: AttackStrategy, db: Database, assessment: AttackAssessment | None = None) -> float:
    """Worst-case failure probability ``max_{l,j} (1 - pass)``."""
    a = _assessment(strategy, db, assessment)
    return float(max(0.0, max(1.0 - e.pass_probability for e in a.entries.values())))


def sigma_star_of(strategy: AttackStrategy, db: Database, assessment: AttackAssessment | None = None) -> DensityMatrix:
    a = _assessment(strategy, db, assessment)
    return mix(Ensemble.uniform([e.sigma for e in a.entries.values()]))


def fidelity_gap_of(strategy, db, assessment=None, sigma_star=None) -> float:
    a = _assessment(strategy, db, assessment)
    star = sigma_star_of(strategy, db, a) if sigma_star is None else sigma_star
    return float(max(1.0 - fidelity(e.sigma, star) for e in a.entries.values()))


def bob_states(assessment: AttackAssessment) -> list[DensityMatrix]:
    """Bob's residue per query averaged over Alice's two send orders."""
    out = []
    for j in assessment.queries:
        out.append(mix(Ensemble.uniform([assessment.entries[(s, j)].sigma for s in SCENARIOS])))
    return out


def bob_information(strategy: AttackStrategy, db: Database, assessment: AttackAssessment | None = None) -> float:
    """Holevo information of ``{1/(N-1), sigma(j)}`` in bits."""
    a = _assessment(strategy, db, assessment)
    return float(max(holevo_chi(Ensemble.uniform(bob_states(a))), 0.0))


@dataclass
class TradeoffPoint:
    theta: float
    epsilon: float
    fidelity_gap: float
    holevo_bits: float
    detection_probability: float
    sigma_star: DensityMatrix | None = field(default=None, repr=False)


def evaluate_point(strategy: AttackStrategy, db: Database, theta: float = float("nan")) -> TradeoffPoint:
    a = assess_attack(strategy, db)
    star = sigma_star_of(strategy, db, a)
    det = float(np.mean([1.0 - 0.5 * sum(a.pass_probability(s, j) for s in SCENARIOS) for j in a.queries]))
    return TradeoffPoint(
        theta=theta,
        epsilon=epsilon_of(strategy, db, a),
        fidelity_gap=fidelity_gap_of(strategy, db, a, star),
        holevo_bits=bob_information(strategy, db, a),
        detection_probability=det,
        sigma_star=star,
    )


def fit_constant(values, epsilons, scale: float = 1.0) -> float:
    """Smallest ``C`` with ``value <= C * eps**(1/4) * scale`` on every point.

    Points with zero epsilon force ``C = inf`` unless their value vanishes.
    """
    c = 0.0
    for v, eps in zip(values, epsilons):
        if eps <= EPS_ZERO:
            if v > NULL_TOL:
                return math.inf
            continue
        c = max(c, v / (eps**0.25 * scale))
    return c


@dataclass
class TradeoffReport:
    n: int
    N: int
    points: list[TradeoffPoint]
    C_F: float
    C_I: float
    p_j_convention: str = P_J_CONVENTION
    sigma_star_convention: str = SIGMA_STAR_CONVENTION

    @property
    def thetas(self) -> list[float]:
        return [p.theta for p in self.points]

    def column(self, name: str) -> list[float]:
        return [getattr(p, name) for p in self.points]

    def to_dict(self, verbose: bool = False) -> dict:
        rows = []
        for i, p in enumerate(self.points):
            row = {
                "index": i,
                "theta": p.theta,
                "epsilon": p.epsilon,
                "fidelity_gap": p.fidelity_gap,
                "holevo_bits": p.holevo_bits,
                "detection_probability": p.detection_probability,
            }
            if verbose and p.sigma_star is not None:
                row["sigma_star"] = {
                    "registers": [list(r) for r in p.sigma_star.layout.registers],
                    "real": p.sigma_star.matrix.real.tolist(),
                    "imag": p.sigma_star.matrix.imag.tolist(),
                }
            rows.append(row)
        return {
            "n": self.n,
            "N": self.N,
            "C_F": self.C_F,
            "C_I": self.C_I,
            "p_j_convention": self.p_j_convention,
            "sigma_star_convention": self.sigma_star_convention,
            "points": rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TradeoffReport":
        points = []
        for row in d["points"]:
            star = None
            if "sigma_star" in row:
                s = row["sigma_star"]
                layout = RegisterLayout(tuple((lab, dim) for lab, dim in s["registers"]))
                m = np.array(s["real"]) + 1j * np.array(s["imag"])
                star = DensityMatrix(layout, 0.5 * (m + m.conj().T))
            points.append(TradeoffPoint(
                theta=row["theta"], epsilon=row["epsilon"], fidelity_gap=row["fidelity_gap"],
                holevo_bits=row["holevo_bits"], detection_probability=row["detection_probability"],
                sigma_star=star,
            ))
        return cls(
            n=d["n"], N=d["N"], points=points, C_F=_inf(d["C_F"]), C_I=_inf(d["C_I"]),
            p_j_convention=d["p_j_convention"], sigma_star_convention=d["sigma_star_convention"],
        )


def _inf(x):
    return math.inf if x in ("inf", "Infinity") else x


def tradeoff_sweep(theta_grid, db: Database) -> TradeoffReport:
    """Evaluate the coupling family on a grid and fit the bound constants."""
    if db.n > MAX_N_COUPLING:
        raise CapExceededError(
            f"coupling sweeps are limited to n <= {MAX_N_COUPLING}", "n", db.n, MAX_N_COUPLING
        )
    points = [evaluate_point(coupling_attack(float(t)), db, float(t)) for t in theta_grid]
    eps = [p.epsilon for p in points]
    log_n = math.log2(db.N)
    return TradeoffReport(
        n=db.n,
        N=db.N,
        points=points,
        C_F=fit_constant([p.fidelity_gap for p in points], eps),
        C_I=fit_constant([p.holevo_bits for p in points], eps, log_n),
    )


@dataclass(frozen=True)
class ComplexityReport:
    n: int
    qpq_qubits: int
    spir_exchange: int
    qpq_db_calls: int
    classical_db_calls: int
    qram_counts: GateCountReport


def complexity_report(n: int) -> ComplexityReport:
    if n < 1:
        raise ValueError(f"address width must be at least 1, got {n}")
    return ComplexityReport(
        n=n,
        qpq_qubits=2 * (n + 1),
        spir_exchange=2**n,
        qpq_db_calls=2,
        classical_db_calls=2**n,
        qram_counts=gate_count(n),
    )


def default_grid(points: int = 9) -> list[float]:
    """``points`` evenly spaced angles from 0 to pi/2 inclusive."""
    if points < 1:
        raise ValueError("grid needs at least one point")
    if points == 1:
        return [0.0]
    return [float(x) for x in np.linspace(0.0, np.pi / 2, points)]


def coupling_cap_ok(strategy: AttackStrategy, n: int) -> bool:
    return not isinstance(strategy, CouplingStrategy) or n <= MAX_N_COUPLING
