"""Bob's strategies and their exact assessment.

Every strategy is described the same way: for each incoming message a list
of gates acting on that message's ``Q``/``R`` registers and Bob's ancilla
registers.  The product of the gates for message 1 (2) is the unitary U1
(U2).  Honest Bob applies only the lookup and leaves the ancilla alone.

Measure-and-reprepare strategies also ship a sampler that measures with a
random generator and keeps outcomes in Python memory.  Sampler and dilation
read from the same decision table (:func:`projective_action`), and
:func:`enumerate_branches` drives the sampler through every outcome with
exact Born weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .errors import CapExceededError, PlanError, ProtocolViolation, QPQError
from .protocol import (
    QueryPlan,
    Variant,
    _exchange,
    honest_reference,
    plan_query,
    query_labels,
    run_protocol,
    run_protocol_exact,
)
from .qram import Database, oracle_direct, oracle_permutation, oracle_unitary
from .quantum_core import (
    DensityMatrix,
    RegisterLayout,
    StateVector,
    UnitaryMatrix,
    apply_basis_map,
    apply_unitary,
    embed,
    measure_computational,
    project,
    random_unitary,
    reduced_matrix,
    reorder,
    split_off,
    subsystem_pass_probability,
    tensor,
    unitary_with_first_column,
)

ANCILLA_CAP = 64
MAX_N_EXACT = 5
SCENARIOS = ("A", "B")


@dataclass(frozen=True, eq=False)
class Gate:
    """A unitary on ``targets``, given either densely or as a basis permutation."""

    targets: tuple[str, ...]
    matrix: UnitaryMatrix | None = None
    perm: np.ndarray | None = None
    db_call: bool = False

    def apply(self, state: StateVector) -> StateVector:
        if self.perm is not None:
            return apply_basis_map(state, self.perm, self.targets)
        return apply_unitary(state, self.matrix, self.targets)

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.matrix
        d = len(self.perm)
        m = np.zeros((d, d), dtype=complex)
        m[self.perm, np.arange(d)] = 1.0
        return m


def _copy_perm(dim: int) -> np.ndarray:
    """``|x>|b> -> |x>|b xor x>`` on two registers of equal dim."""
    x = np.repeat(np.arange(dim), dim)
    b = np.tile(np.arange(dim), dim)
    return x * dim + (b ^ x)


def _lookup(db: Database, q: str, r: str) -> Gate:
    return Gate((q, r), perm=oracle_permutation(db), db_call=True)


def superposed_reply(db: Database, j: int) -> np.ndarray:
    """``(|j>|A_j> + |0>|0>)/sqrt(2)`` on ``Q (x) R``: Bob's re-preparation of the equal superposition."""
    v = np.zeros(2 * db.N, dtype=complex)
    v[2 * j + db[j]] += 1 / np.sqrt(2)
    v[0] += 1 / np.sqrt(2)
    return v


class UnitarySession:
    """Applies a strategy's gates to the joint state, message by message."""

    deterministic = True

    def __init__(self, strategy: "AttackStrategy", db: Database):
        self.strategy = strategy
        self.db = db
        self.ancilla = strategy.ancilla_layout(db.n)
        self.db_calls = 0
        self.record = {}

    def respond(self, state, index, q, r):
        allowed = {q, r, *self.ancilla.labels}
        for gate in self.strategy.gates(self.db, index):
            if self.strategy.causal and not set(gate.targets) <= allowed:
                raise ProtocolViolation(
                    f"{self.strategy.name} touched {gate.targets} while answering {q}"
                )
            state = gate.apply(state)
            self.db_calls += gate.db_call
        return state

    def account(self, index):
        self.db_calls += sum(g.db_call for g in self.strategy.gates(self.db, index))


class AttackStrategy:
    """Base class: a name, an ancilla layout and per-message gate lists."""

    name = "strategy"
    causal = True
    max_messages: int | None = 2

    def ancilla_layout(self, n: int) -> RegisterLayout:
        return RegisterLayout.of(("B", 1))

    def ancilla_dim(self, n: int) -> int:
        return self.ancilla_layout(n).dim

    def gates(self, db: Database, index: int) -> list[Gate]:
        """Gates answering message ``index``; cached per database."""
        cache = self.__dict__.setdefault("_gate_cache", {})
        key = (db, index)
        if key not in cache:
            cache[key] = self._build_gates(db, index)
        return cache[key]

    def _build_gates(self, db: Database, index: int) -> list[Gate]:
        raise NotImplementedError

    def _check_index(self, index):
        if self.max_messages is not None and index >= self.max_messages:
            raise PlanError(f"{self.name} answers at most {self.max_messages} messages")

    def session(self, db: Database, rng: np.random.Generator | None = None):
        return UnitarySession(self, db)

    def exact_session(self, db: Database):
        return UnitarySession(self, db)

    def response_unitary(self, db: Database, index: int) -> tuple[UnitaryMatrix, tuple[str, ...]]:
        """The gates for one message multiplied into a single unitary (U1 or U2)."""
        gates = self.gates(db, index)
        q, r = query_labels(index)
        labels = [q, r]
        for g in gates:
            labels += [lab for lab in g.targets if lab not in labels]
        dims = {q: db.N, r: 2}
        dims.update(self.ancilla_layout(db.n).registers)
        for i in range(index):
            qi, ri = query_labels(i)
            dims.update({qi: db.N, ri: 2})
        layout = RegisterLayout(tuple((lab, dims[lab]) for lab in labels))
        if layout.dim > 4096:
            raise CapExceededError(
                f"dense response unitary of dim {layout.dim} exceeds 4096", "response_dim", layout.dim, 4096
            )
        u = np.eye(layout.dim, dtype=complex)
        for g in gates:
            u = embed(g.dense(), g.targets, layout) @ u
        return UnitaryMatrix(u), tuple(labels)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class HonestStrategy(AttackStrategy):
    name = "honest"
    max_messages = None

    def _build_gates(self, db, index):
        q, r = query_labels(index)
        return [_lookup(db, q, r)]


def honest_strategy() -> HonestStrategy:
    return HonestStrategy()


# --- projective measure-and-reprepare ----------------------------------------

PAPER = "paper"
STRICT = "strict"
LOOKUP = ("lookup",)


def projective_action(mode: str, m1: int, m2: int):
    """Bob's reply to the second message after measuring ``m1`` then ``m2``.

    Returns ``(second_reply, first_fix)``; each is ``LOOKUP`` or
    ``("super", j)`` meaning re-prepare ``(|j>|A_j> + |0>|0>)/sqrt(2)``.
    ``first_fix`` rewrites the already returned first reply and is only
    produced in paper mode.  The first message is always answered by a lookup
    on the measured value.
    """
    if m1 != 0 and m2 == 0:
        return ("super", m1), None
    if m1 == 0 and m2 != 0:
        return LOOKUP, (("super", m2) if mode == PAPER else None)
    return LOOKUP, None


def learned_query(m1: int, m2: int) -> int:
    return m1 if m1 != 0 else m2


class ProjectiveStrategy(AttackStrategy):
    """Measure each query in the computational basis and re-prepare honest-looking replies.

    In ``paper`` mode a first reply found to carry ``|0>`` is repaired after the
    second measurement, i.e. Bob is allowed to act on a register he already
    returned.  ``strict`` mode obeys message ordering.
    """

    def __init__(self, mode: str = PAPER):
        if mode not in (PAPER, STRICT):
            raise ValueError(f"projective mode must be 'paper' or 'strict', got {mode!r}")
        self.mode = mode
        self.name = f"projective:{mode}"
        self.causal = mode == STRICT

    def ancilla_layout(self, n):
        N = 2**n
        return RegisterLayout.of(("B1", N), ("B2", N))

    def _controlled(self, db, control_fn, q, r) -> Gate:
        """Block-diagonal gate on ``(q, r, B1, B2)`` choosing a reply per recorded ``(m1, m2)``."""
        N = db.N
        d = 2 * N * N * N
        m = np.zeros((d, d), dtype=complex)
        base = np.arange(2 * N) * N * N
        lookup = oracle_unitary(db).matrix
        eye = np.eye(2 * N, dtype=complex)
        for m1, m2 in product(range(N), range(N)):
            act = control_fn(m1, m2)
            if act is None:
                block = eye
            elif act == LOOKUP:
                block = lookup
            else:
                block = unitary_with_first_column(superposed_reply(db, act[1])).matrix
            idx = base + m1 * N + m2
            m[np.ix_(idx, idx)] = block
        return Gate((q, r, "B1", "B2"), matrix=UnitaryMatrix(m), db_call=True)

    def _build_gates(self, db, index):
        self._check_index(index)
        N = db.N
        q, r = query_labels(index)
        if index == 0:
            return [Gate((q, "B1"), perm=_copy_perm(N)), _lookup(db, q, r)]
        gates = [
            Gate((q, "B2"), perm=_copy_perm(N)),
            self._controlled(db, lambda m1, m2: projective_action(self.mode, m1, m2)[0], q, r),
        ]
        if self.mode == PAPER:
            q1, r1 = query_labels(0)
            gates.append(self._controlled(db, lambda m1, m2: projective_action(self.mode, m1, m2)[1], q1, r1))
        return gates

    def session(self, db, rng=None):
        return ProjectiveSampler(self, db, rng)

    def exact_session(self, db):
        if self.ancilla_dim(db.n) > ANCILLA_CAP:
            raise CapExceededError(
                f"projective dilation needs ancilla dim {self.ancilla_dim(db.n)} > {ANCILLA_CAP}",
                "ancilla_dim", self.ancilla_dim(db.n), ANCILLA_CAP,
            )
        return UnitarySession(self, db)


def _replace_pair(state: StateVector, q: str, r: str, new: np.ndarray) -> StateVector:
    """Swap out ``(q, r)`` (currently ``|0>|0>``) for a freshly prepared state."""
    order = state.layout.labels
    dims = (state.layout.dim_of(q), state.layout.dim_of(r))
    rest = split_off(state, [q, r], 0)
    fresh = StateVector(RegisterLayout.of((q, dims[0]), (r, dims[1])), new)
    return reorder(tensor(rest, fresh), order)


class ProjectiveSampler:
    """Monte-Carlo Bob: real measurements, outcomes kept classically.

    With ``forced`` outcomes it projects instead of sampling and multiplies
    the Born weights into ``weight`` (used by :func:`enumerate_branches`).
    """

    def __init__(self, strategy: ProjectiveStrategy, db: Database, rng=None, forced=None):
        self.strategy = strategy
        self.db = db
        self.rng = rng
        self.forced = forced
        self.ancilla = RegisterLayout.of(("B", 1))
        self.db_calls = 0
        self.record = {}
        self.outcomes = []
        self.weight = 1.0

    def _measure(self, state, q):
        if self.forced is None:
            m, state, _ = measure_computational(state, q, self.rng)
        else:
            m = self.forced[len(self.outcomes)]
            state, p = project(state, q, m)
            self.weight *= p
        self.outcomes.append(m)
        return m, state

    def respond(self, state, index, q, r):
        self.strategy._check_index(index)
        m, state = self._measure(state, q)
        if index == 0:
            self.db_calls += 1
            return oracle_direct(state, self.db, q, r)
        m1, m2 = self.outcomes
        second, fix = projective_action(self.strategy.mode, m1, m2)
        self.db_calls += 1
        if second == LOOKUP:
            state = oracle_direct(state, self.db, q, r)
        else:
            state = _replace_pair(state, q, r, superposed_reply(self.db, second[1]))
        if fix is not None:
            q1, r1 = query_labels(0)
            state = _replace_pair(state, q1, r1, superposed_reply(self.db, fix[1]))
        self.record = {"outcomes": [m1, m2], "learned_j": learned_query(m1, m2)}
        return state


def projective_both_strategy(mode: str = PAPER) -> ProjectiveStrategy:
    return ProjectiveStrategy(mode)


@dataclass(frozen=True)
class Branch:
    probability: float
    state: StateVector
    outcomes: tuple[int, ...]
    learned_j: int


def enumerate_branches(strategy: ProjectiveStrategy, db: Database, plan: QueryPlan) -> list[Branch]:
    """Every measurement branch of the sampler with its exact Born weight."""
    branches = []
    for forced in product(range(db.N), repeat=len(plan.order)):
        session = ProjectiveSampler(strategy, db, forced=forced)
        try:
            state, _ = _exchange(db, plan, session)
        except QPQError:
            continue
        if session.weight > 0:
            branches.append(Branch(session.weight, state, tuple(forced), learned_query(*forced)))
    return branches


# --- coupling family ---------------------------------------------------------


class CouplingStrategy(AttackStrategy):
    """Honest lookup followed by a partial copy of ``Q`` into a fresh ancilla slice.

    Controlled on ``Q = q`` the slice is rotated by ``theta`` in the plane
    ``{|0>, |q>}``; ``theta = pi/2`` is a perfect copy of ``Q``.
    """

    def __init__(self, theta: float):
        if not 0.0 <= theta <= np.pi / 2 + 1e-12:
            raise ValueError(f"theta must lie in [0, pi/2], got {theta}")
        self.theta = float(min(theta, np.pi / 2))
        self.name = f"coupling:{self.theta:.12g}"

    def ancilla_layout(self, n):
        N = 2**n
        return RegisterLayout.of(("B1", N), ("B2", N))

    def coupling_unitary(self, N: int) -> UnitaryMatrix:
        c, s = np.cos(self.theta), np.sin(self.theta)
        m = np.zeros((N * N, N * N), dtype=complex)
        m[0:N, 0:N] = np.eye(N)
        for q in range(1, N):
            block = np.eye(N, dtype=complex)
            block[0, 0], block[q, 0], block[0, q], block[q, q] = c, s, -s, c
            m[q * N:(q + 1) * N, q * N:(q + 1) * N] = block
        return UnitaryMatrix(m)

    def _build_gates(self, db, index):
        self._check_index(index)
        q, r = query_labels(index)
        return [_lookup(db, q, r), Gate((q, f"B{index + 1}"), matrix=self.coupling_unitary(db.N))]


def coupling_attack(theta: float) -> CouplingStrategy:
    return CouplingStrategy(theta)


class UnitaryStrategy(AttackStrategy):
    """Arbitrary ``U1`` on ``(Q1, R1, B)`` and ``U2`` on ``(Q2, R2, B)``."""

    def __init__(self, u1: UnitaryMatrix, u2: UnitaryMatrix, ancilla_dim: int, name: str = "unitary"):
        self.u1, self.u2 = u1, u2
        self.dim_b = ancilla_dim
        self.name = name

    def ancilla_layout(self, n):
        return RegisterLayout.of(("B", self.dim_b))

    def _build_gates(self, db, index):
        self._check_index(index)
        q, r = query_labels(index)
        expected = 2 * db.N * self.dim_b
        u = (self.u1, self.u2)[index]
        if u.dim != expected:
            raise QPQError(f"U{index + 1} has dim {u.dim}, expected {expected}")
        return [Gate((q, r, "B"), matrix=u)]


def random_strategy(n: int, ancilla_dim: int, rng: np.random.Generator) -> UnitaryStrategy:
    d = 2 * 2**n * ancilla_dim
    return UnitaryStrategy(random_unitary(d, rng), random_unitary(d, rng), ancilla_dim, name="random")


def parse_angle(text: str) -> float:
    """A float, or a multiple of pi written ``[a*]pi[/b]`` (e.g. ``pi/4``, ``3*pi/8``)."""
    t = text.strip().replace(" ", "")
    try:
        return float(t)
    except ValueError:
        pass
    num, _, den = t.partition("/")
    coef, star, rest = num.rpartition("*")
    try:
        if (rest if star else num) != "pi":
            raise ValueError
        value = (float(coef) if star else 1.0) * np.pi
        return value / float(den) if den else value
    except ValueError:
        raise ValueError(f"bad angle {text!r}") from None


def parse_strategy(spec: str) -> AttackStrategy:
    """``honest | projective:paper | projective:strict | coupling:<theta>``.

    ``<theta>`` is parsed by :func:`parse_angle`.
    """
    if spec == "honest":
        return honest_strategy()
    kind, _, arg = spec.partition(":")
    if kind == "projective" and arg in (PAPER, STRICT):
        return projective_both_strategy(arg)
    if kind == "coupling" and arg:
        return coupling_attack(parse_angle(arg))
    raise ValueError(f"unknown strategy {spec!r}")


# --- exact assessment --------------------------------------------------------


def check_caps(strategy: AttackStrategy, n: int):
    if n > MAX_N_EXACT:
        raise CapExceededError(f"exact analysis is limited to n <= {MAX_N_EXACT}", "n", n, MAX_N_EXACT)
    dim_b = strategy.ancilla_dim(n)
    if dim_b > ANCILLA_CAP and not isinstance(strategy, ProjectiveStrategy):
        raise CapExceededError(
            f"{strategy.name} needs ancilla dim {dim_b} > {ANCILLA_CAP} at n={n}", "ancilla_dim", dim_b, ANCILLA_CAP
        )


def basic_plan(n: int, j: int, scenario: str) -> QueryPlan:
    return plan_query(j, n, np.random.default_rng(0), Variant.BASIC, scenario=scenario)


@dataclass(eq=False)
class AssessmentEntry:
    """Exact result for one ``(scenario, j)``: Alice's state, Bob's residue, pass probability."""

    scenario: str
    j: int
    pass_probability: float
    alice_labels: tuple[str, ...]
    ancilla_layout: RegisterLayout
    state: StateVector | None = None
    branches: list[Branch] | None = field(default=None, repr=False)

    @cached_property
    def rho(self) -> DensityMatrix:
        if self.state is not None:
            m = reduced_matrix(self.state, self.alice_labels)
            layout = self.state.layout.select(self.alice_labels)
        else:
            first = self.branches[0].state
            layout = first.layout.select(self.alice_labels)
            m = sum(b.probability * reduced_matrix(b.state, self.alice_labels) for b in self.branches)
        return DensityMatrix(layout, m)

    @cached_property
    def sigma(self) -> DensityMatrix:
        if self.state is not None:
            return DensityMatrix(self.ancilla_layout, reduced_matrix(self.state, self.ancilla_layout.labels))
        d = self.ancilla_layout.dim
        m = np.zeros((d, d), dtype=complex)
        for b in self.branches:
            idx = np.ravel_multi_index(b.outcomes, self.ancilla_layout.dims)
            m[idx, idx] += b.probability
        return DensityMatrix(self.ancilla_layout, m)


def simulate_attack_exact(strategy: AttackStrategy, db: Database, j: int, scenario: str) -> AssessmentEntry:
    """Exact ``rho_l(j)``, ``sigma_l(j)`` and pass probability for one scenario.

    Projective strategies whose dilation would exceed the ancilla cap are
    evaluated by exact branch enumeration instead; both give the same states.
    """
    check_caps(strategy, db.n)
    plan = basic_plan(db.n, j, scenario)
    alice = tuple(lab for i in range(2) for lab in query_labels(i))
    layout_b = strategy.ancilla_layout(db.n)
    if isinstance(strategy, ProjectiveStrategy) and layout_b.dim > ANCILLA_CAP:
        branches = enumerate_branches(strategy, db, plan)
        honest = honest_reference(plan, db[j]).joint(plan)
        p = sum(b.probability * subsystem_pass_probability(b.state, honest, alice) for b in branches)
        return AssessmentEntry(scenario, j, float(p), alice, layout_b, branches=branches)
    run = run_protocol_exact(db, plan, strategy)
    return AssessmentEntry(scenario, j, run.pass_probability, alice, layout_b, state=run.state)


@dataclass
class AttackAssessment:
    strategy: str
    n: int
    entries: dict[tuple[str, int], AssessmentEntry]

    def pass_probability(self, scenario: str, j: int) -> float:
        return self.entries[(scenario, j)].pass_probability

    @property
    def queries(self) -> list[int]:
        return sorted({j for _, j in self.entries})


def assess_attack(strategy: AttackStrategy, db: Database, queries=None) -> AttackAssessment:
    queries = range(1, db.N) if queries is None else queries
    entries = {(s, j): simulate_attack_exact(strategy, db, j, s) for s in SCENARIOS for j in queries}
    return AttackAssessment(strategy.name, db.n, entries)


def sample_attack_run(strategy: AttackStrategy, db: Database, plan: QueryPlan, rng: np.random.Generator):
    """One Monte-Carlo session; returns the :class:`ProtocolOutcome`."""
    outcome, _ = run_protocol(db, plan, strategy, rng)
    return outcome

