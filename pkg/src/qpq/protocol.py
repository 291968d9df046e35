"""Alice's side of the private-query exchange and the message-ordering rules.

Alice sends her query registers one at a time, each with a blank answer
register ``R`` attached, and waits for Bob's reply before sending the next.
Message ``i`` (zero-based) travels in registers ``Q{i+1}`` and ``R{i+1}``.
Bob is any object implementing the session interface documented on
:class:`BobSession`; strategies live in :mod:`qpq.adversary`.

Two drivers share the exchange logic: :func:`run_protocol` samples Alice's
measurements, :func:`run_protocol_exact` keeps the full joint state and
reports exact pass probabilities.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Protocol as _Protocol

import numpy as np

from .errors import PlanError, ProtocolViolation, QPQError
from .qram import Database
from .quantum_core import (
    ATOL,
    DensityMatrix,
    RegisterLayout,
    StateVector,
    expectation_of_state,
    ket,
    measure_computational,
    random_state,
    relabel,
    subsystem_pass_probability,
    tensor,
)

PLAIN = "plain"
SUPER = "super"
DECOY = "decoy"

SQRT_HALF = 1.0 / np.sqrt(2.0)


class Variant(str, enum.Enum):
    BASIC = "basic"
    AMPLITUDE = "arbitrary-amplitude"
    TWO_QUERY = "two-query"


def query_labels(index: int) -> tuple[str, str]:
    return f"Q{index + 1}", f"R{index + 1}"


@dataclass(frozen=True)
class QueryPlan:
    """Alice's private choices for one session.

    ``order`` lists the roles of the registers in send order: ``plain`` is
    ``|j>``, ``super`` is ``alpha|j> + beta|reference>`` and ``decoy`` is
    ``|k>`` (two-query variant only, where ``reference == k``).
    """

    n: int
    j: int
    variant: Variant
    reference: int
    alpha: complex
    beta: complex
    order: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        N = 2**self.n
        if self.n < 1:
            raise PlanError(f"address width must be at least 1, got {self.n}")
        if not 1 <= self.j <= N - 1:
            raise PlanError(f"query j={self.j} outside 1..{N - 1}")
        if abs(abs(self.alpha) ** 2 + abs(self.beta) ** 2 - 1.0) > ATOL:
            raise PlanError("amplitudes must satisfy |alpha|^2 + |beta|^2 = 1")
        if self.variant is Variant.TWO_QUERY:
            if not 1 <= self.reference <= N - 1 or self.reference == self.j:
                raise PlanError(f"second query k={self.reference} must be in 1..{N - 1} and differ from j")
            if sorted(self.order) != sorted((PLAIN, SUPER, DECOY)):
                raise PlanError(f"two-query order must permute plain/super/decoy, got {self.order}")
        else:
            if self.reference != 0:
                raise PlanError("basic and arbitrary-amplitude plans superpose with record 0")
            if sorted(self.order) != sorted((PLAIN, SUPER)):
                raise PlanError(f"order must permute plain/super, got {self.order}")
        if self.variant in (Variant.BASIC, Variant.TWO_QUERY):
            if abs(self.alpha - SQRT_HALF) > ATOL or abs(self.beta - SQRT_HALF) > ATOL:
                raise PlanError(f"{self.variant.value} variant uses alpha = beta = 1/sqrt(2)")

    @property
    def N(self) -> int:
        return 2**self.n

    @property
    def k(self) -> int | None:
        return self.reference if self.variant is Variant.TWO_QUERY else None

    @property
    def scenario(self) -> str:
        """``"A"`` when the plain query goes first, ``"B"`` when the superposition does."""
        return "B" if self.order[0] == SUPER else "A"

    def position(self, role: str) -> int:
        return self.order.index(role)


def plan_query(
    j: int,
    n: int,
    rng: np.random.Generator,
    variant: Variant | str = Variant.BASIC,
    *,
    k: int | None = None,
    alpha: complex | None = None,
    beta: complex | None = None,
    scenario: str | None = None,
    order: tuple[str, ...] | None = None,
    seed: int | None = None,
) -> QueryPlan:
    """Draw Alice's random choices.

    The send order is uniform over the admissible orders unless fixed by
    ``scenario`` or ``order``.  The arbitrary-amplitude variant draws a
    uniformly random qubit state for ``(alpha, beta)`` unless both are given;
    the two-query variant draws ``k`` uniformly from ``{1..N-1} \\ {j}``.
    """
    variant = Variant(variant)
    N = 2**n
    if not 1 <= j <= N - 1:
        raise PlanError(f"query j={j} outside 1..{N - 1}")
    if variant is Variant.TWO_QUERY:
        if k is None:
            if N < 3:
                raise PlanError("two-query variant needs N >= 3")
            choices = [x for x in range(1, N) if x != j]
            k = int(choices[rng.integers(len(choices))])
        if order is None:
            roles = [PLAIN, SUPER, DECOY]
            order = tuple(roles[i] for i in rng.permutation(3))
        return QueryPlan(n, j, variant, k, SQRT_HALF, SQRT_HALF, order, seed)

    if order is None:
        if scenario is None:
            scenario = "A" if rng.random() < 0.5 else "B"
        if scenario not in ("A", "B"):
            raise PlanError(f"scenario must be 'A' or 'B', got {scenario!r}")
        order = (PLAIN, SUPER) if scenario == "A" else (SUPER, PLAIN)
    if variant is Variant.BASIC:
        alpha = beta = SQRT_HALF
    elif alpha is None or beta is None:
        alpha, beta = random_state(RegisterLayout.of(("qubit", 2)), rng).amplitudes
    return QueryPlan(n, j, variant, 0, alpha, beta, order, seed)


def _query_state(role: str, plan: QueryPlan) -> StateVector:
    N = plan.N
    amps = np.zeros(N, dtype=complex)
    if role == PLAIN:
        amps[plan.j] = 1.0
    elif role == DECOY:
        amps[plan.reference] = 1.0
    else:
        amps[plan.j] += plan.alpha
        amps[plan.reference] += plan.beta
    return StateVector(RegisterLayout.of(("Q", N)), amps)


def alice_prepare(plan: QueryPlan) -> list[tuple[str, StateVector]]:
    """Query registers ``(role, state on Q)`` in send order."""
    return [(role, _query_state(role, plan)) for role in plan.order]


def joint_query_state(plan: QueryPlan) -> StateVector:
    """Alice's sent registers as one product state on ``Q1 (x) Q2 (x) ...``."""
    out = None
    for i, (_, q) in enumerate(alice_prepare(plan)):
        part = relabel(q, {"Q": query_labels(i)[0]})
        out = part if out is None else tensor(out, part)
    return out


def scenario_states(n: int, j: int) -> dict[str, StateVector]:
    """``S_A = |j>(|j>+|0>)/sqrt2`` and ``S_B = (|j>+|0>)|j>/sqrt2`` for the basic variant."""
    return {
        s: joint_query_state(plan_query(j, n, np.random.default_rng(0), Variant.BASIC, scenario=s))
        for s in ("A", "B")
    }


@dataclass(frozen=True)
class HonestReference:
    """What an honest Bob returns: one state on ``Q (x) R`` per role."""

    psi_plain: StateVector
    psi_super: StateVector
    psi_decoy: StateVector | None = None

    def for_role(self, role: str) -> StateVector:
        return {PLAIN: self.psi_plain, SUPER: self.psi_super, DECOY: self.psi_decoy}[role]

    def joint(self, plan: QueryPlan) -> StateVector:
        """Ordered product ``Q1 R1 Q2 R2 ...`` of the expected replies."""
        out = None
        for i, role in enumerate(plan.order):
            q, r = query_labels(i)
            part = relabel(self.for_role(role), {"Q": q, "R": r})
            out = part if out is None else tensor(out, part)
        return out


def honest_reference(plan: QueryPlan, answer_j: int, answer_k: int | None = None) -> HonestReference:
    """Expected honest replies given the record values Alice believes in.

    ``A_0 = 0`` is public, so the basic and arbitrary-amplitude variants need
    only ``answer_j``; the two-query variant also needs ``answer_k``.
    """
    N = plan.N
    layout = RegisterLayout.of(("Q", N), ("R", 2))

    def basis(idx, bit):
        a = np.zeros(2 * N, dtype=complex)
        a[2 * idx + bit] = 1.0
        return a

    ref_bit = 0
    decoy = None
    if plan.variant is Variant.TWO_QUERY:
        if answer_k is None:
            raise PlanError("two-query reference needs the decoy record value")
        ref_bit = answer_k
        decoy = StateVector(layout, basis(plan.reference, answer_k))
    sup = plan.alpha * basis(plan.j, answer_j) + plan.beta * basis(plan.reference, ref_bit)
    return HonestReference(StateVector(layout, basis(plan.j, answer_j)), StateVector(layout, sup), decoy)


# --- transcript -------------------------------------------------------------

TO_BOB = "to-Bob"
TO_ALICE = "to-Alice"


@dataclass(frozen=True)
class Message:
    direction: str
    registers: tuple[tuple[str, int], ...]
    qubit_count: int


@dataclass
class Transcript:
    """Ordered message log enforcing strict alternation, starting with Alice.

    Every message carries a query register and its answer register, i.e.
    ``n + 1`` qubits.  ``total_qubits`` counts the upstream legs only, which
    gives ``2(n+1)`` for a two-register session; ``leg_qubits`` counts both
    directions.
    """

    n: int
    messages: list[Message] = field(default_factory=list)
    db_calls: int = 0
    violation: str | None = None
    bob_record: dict = field(default_factory=dict)

    def send(self, registers):
        if self.messages and self.messages[-1].direction == TO_BOB:
            raise ProtocolViolation("Alice sent a register before Bob answered the previous one")
        self.messages.append(Message(TO_BOB, tuple(registers), self._qubits(registers)))

    def reply(self, registers):
        if not self.messages or self.messages[-1].direction != TO_BOB:
            raise ProtocolViolation("Bob replied without a pending query")
        self.messages.append(Message(TO_ALICE, tuple(registers), self._qubits(registers)))

    @staticmethod
    def _qubits(registers) -> int:
        return sum((d - 1).bit_length() for _, d in registers)

    @property
    def complete(self) -> bool:
        return bool(self.messages) and self.messages[-1].direction == TO_ALICE

    @property
    def sends(self) -> int:
        return sum(m.direction == TO_BOB for m in self.messages)

    @property
    def total_qubits(self) -> int:
        return sum(m.qubit_count for m in self.messages if m.direction == TO_BOB)

    @property
    def leg_qubits(self) -> int:
        return sum(m.qubit_count for m in self.messages)

    def check_timing(self):
        """Each query ``Qi`` goes out only after the reply carrying ``R(i-1)``."""
        for i, m in enumerate(self.messages):
            expected = TO_BOB if i % 2 == 0 else TO_ALICE
            if m.direction != expected:
                raise ProtocolViolation(f"message {i} should be {expected}, got {m.direction}")
            if m.direction == TO_BOB and i > 0:
                prev = dict(self.messages[i - 1].registers)
                r_prev = query_labels(i // 2 - 1)[1]
                if r_prev not in prev:
                    raise ProtocolViolation(f"query {i // 2 + 1} sent before {r_prev} came back")


@dataclass(frozen=True)
class CommCost:
    total_qubits: int
    leg_qubits: int
    db_calls: int
    qpq_db_calls: int
    classical_pir_calls: int
    spir_exchange: int


def comm_cost(transcript: Transcript) -> CommCost:
    """Communication counters plus the classical comparison constants."""
    if not transcript.complete:
        raise ProtocolViolation("transcript is incomplete: the last query has no reply")
    N = 2**transcript.n
    return CommCost(
        total_qubits=transcript.total_qubits,
        leg_qubits=transcript.leg_qubits,
        db_calls=transcript.db_calls,
        qpq_db_calls=2,
        classical_pir_calls=N,
        spir_exchange=N,
    )


# --- Bob's side interface ---------------------------------------------------


class BobSession(_Protocol):
    """Per-run server state.

    ``respond`` receives the joint state of every register in play (Alice's,
    in transit, and Bob's ancilla) and returns it after Bob's action on
    message ``index``.  It may touch only ``q``, ``r`` and its ancilla unless
    the owning strategy declares itself non-causal.
    """

    ancilla: RegisterLayout
    db_calls: int
    record: dict

    def respond(self, state: StateVector, index: int, q: str, r: str) -> StateVector: ...


class Strategy(_Protocol):
    name: str

    def session(self, db: Database, rng: np.random.Generator | None) -> BobSession: ...

    def exact_session(self, db: Database) -> BobSession: ...


# --- Alice's measurements ---------------------------------------------------


def _measure_register_pair(state, q, r, rng):
    qo, state, _ = measure_computational(state, q, rng)
    ro, state, _ = measure_computational(state, r, rng)
    return qo, ro, state


def alice_extract_answer(
    response: StateVector, plan: QueryPlan, rng: np.random.Generator, *, q: str = "Q", r: str = "R",
    expected: int | None = None,
) -> tuple[int, bool]:
    """Measure a plain reply: returns ``(R outcome, Q outcome == expected)``.

    ``expected`` defaults to ``plan.j``.
    """
    expected = plan.j if expected is None else expected
    qo, ro, _ = _measure_register_pair(response, q, r, rng)
    return ro, qo == expected


def superposition_pass_probability(
    response: StateVector | DensityMatrix, reference: HonestReference, *, q: str = "Q", r: str = "R"
) -> float:
    """``<psi_super| rho |psi_super>`` on the reply registers."""
    psi = reference.psi_super
    if isinstance(response, DensityMatrix):
        if response.layout.labels != (q, r):
            raise QPQError(f"expected a density matrix on {(q, r)}, got {response.layout.labels}")
        return expectation_of_state(response, relabel(psi, {"Q": q, "R": r}))
    return subsystem_pass_probability(response, psi, [q, r])


def alice_test_superposition(
    response: StateVector | DensityMatrix, reference: HonestReference, rng: np.random.Generator,
    *, q: str = "Q", r: str = "R",
) -> bool:
    """One-shot projective test onto the expected honest superposition."""
    p = superposition_pass_probability(response, reference, q=q, r=r)
    return bool(rng.random() < p)


# --- drivers ----------------------------------------------------------------


@dataclass(frozen=True)
class ProtocolOutcome:
    answer: int
    plain_query_consistent: bool
    test_passed: bool
    detected_cheating: bool
    pass_probability: float
    decoy_answer: int | None = None

    def __post_init__(self):
        if self.detected_cheating != (not (self.test_passed and self.plain_query_consistent)):
            raise QPQError("detected_cheating must equal not (test_passed and plain_query_consistent)")


def _fresh_register(role_state: StateVector, index: int) -> StateVector:
    q, r = query_labels(index)
    return tensor(relabel(role_state, {"Q": q}), ket(r, 2, 0))


def _exchange(
    db: Database, plan: QueryPlan, session: BobSession, simulate: bool = True
) -> tuple[StateVector | None, Transcript]:
    """Send Alice's registers one by one, waiting for each reply.

    With ``simulate=False`` only the message flow and Bob's lookup count are
    recorded (``session.account(index)`` replaces ``respond``), which keeps
    the counters available for address widths far beyond simulation range.
    """
    if db.n != plan.n:
        raise PlanError(f"plan width n={plan.n} does not match database width n={db.n}")
    transcript = Transcript(plan.n)
    state = None
    if simulate:
        for label, dim in session.ancilla.registers:
            part = ket(label, dim, 0)
            state = part if state is None else tensor(state, part)
        queries = [q for _, q in alice_prepare(plan)]
    else:
        queries = [None] * len(plan.order)
    for i, query in enumerate(queries):
        q, r = query_labels(i)
        registers = ((q, plan.N), (r, 2))
        transcript.send(registers)
        if not simulate:
            session.account(i)
            transcript.reply(registers)
            continue
        reg = _fresh_register(query, i)
        state = reg if state is None else tensor(state, reg)
        before = state.layout
        state = session.respond(state, i, q, r)
        transcript.reply(registers)
        if state.layout != before:
            transcript.violation = f"reply to message {i} changed the register layout"
            state = None
            break
    transcript.db_calls = session.db_calls
    transcript.bob_record = dict(session.record)
    transcript.check_timing()
    return state, transcript


def transcript_only(db: Database, plan: QueryPlan, strategy: Strategy) -> Transcript:
    """Message flow and counters of a session without simulating any state."""
    _, transcript = _exchange(db, plan, strategy.exact_session(db), simulate=False)
    return transcript


REPLAY_CACHE_SIZE = 256


def _replay(db, plan, strategy, session):
    cache = strategy.__dict__.setdefault("_replay_cache", {})
    key = (db, plan)
    if key not in cache:
        if len(cache) >= REPLAY_CACHE_SIZE:
            cache.pop(next(iter(cache)))
        cache[key] = _exchange(db, plan, session)
    state, transcript = cache[key]
    return state, replace(transcript, messages=list(transcript.messages), bob_record=dict(transcript.bob_record))


def _violation_outcome():
    return ProtocolOutcome(answer=-1, plain_query_consistent=False, test_passed=False,
                           detected_cheating=True, pass_probability=0.0)


def run_protocol(
    db: Database, plan: QueryPlan, strategy: Strategy, rng: np.random.Generator
) -> tuple[ProtocolOutcome, Transcript]:
    """One sampled session: Alice measures her plain replies, then tests the superposition.

    Sessions flagged ``deterministic`` (no randomness on Bob's side) are
    replayed from a per-strategy cache keyed by ``(db, plan)``; only Alice's
    measurements are drawn afresh.
    """
    session = strategy.session(db, rng)
    if getattr(session, "deterministic", False):
        state, transcript = _replay(db, plan, strategy, session)
    else:
        state, transcript = _exchange(db, plan, session)
    if state is None:
        return _violation_outcome(), transcript
    q, r = query_labels(plan.position(PLAIN))
    qo, answer, state = _measure_register_pair(state, q, r, rng)
    consistent = qo == plan.j
    answer_k = None
    if plan.variant is Variant.TWO_QUERY:
        qk, rk = query_labels(plan.position(DECOY))
        ko, answer_k, state = _measure_register_pair(state, qk, rk, rng)
        consistent = consistent and ko == plan.reference
    reference = honest_reference(plan, answer, answer_k)
    qs, rs = query_labels(plan.position(SUPER))
    p = superposition_pass_probability(state, reference, q=qs, r=rs)
    passed = bool(rng.random() < p)
    outcome = ProtocolOutcome(
        answer=answer,
        plain_query_consistent=consistent,
        test_passed=passed,
        detected_cheating=not (passed and consistent),
        pass_probability=p,
        decoy_answer=answer_k,
    )
    return outcome, transcript


@dataclass(frozen=True)
class ExactRun:
    """Final joint state of a session and its exact acceptance probability."""

    plan: QueryPlan
    state: StateVector | None
    transcript: Transcript
    reference: HonestReference
    pass_probability: float

    @property
    def alice_labels(self) -> list[str]:
        return [lab for i in range(len(self.plan.order)) for lab in query_labels(i)]

    @property
    def ancilla_labels(self) -> list[str]:
        return [lab for lab in self.state.layout.labels if lab not in set(self.alice_labels)]


def run_protocol_exact(db: Database, plan: QueryPlan, strategy: Strategy) -> ExactRun:
    """Deterministic twin of :func:`run_protocol`.

    The pass probability is the weight of the final state on the ordered
    product of honest replies built from the true records, which is the
    probability that every plain reply is consistent and the superposition
    test succeeds.
    """
    state, transcript = _exchange(db, plan, strategy.exact_session(db))
    reference = honest_reference(plan, db[plan.j], db[plan.reference] if plan.k is not None else None)
    if state is None:
        return ExactRun(plan, None, transcript, reference, 0.0)
    honest = reference.joint(plan)
    alice = [lab for i in range(len(plan.order)) for lab in query_labels(i)]
    p = subsystem_pass_probability(state, honest, alice)
    return ExactRun(plan, state, transcript, reference, p)

