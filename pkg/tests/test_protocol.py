import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpq.adversary import honest_strategy
from qpq.errors import PlanError, ProtocolViolation, QPQError
from qpq.protocol import (
    DECOY,
    PLAIN,
    SUPER,
    QueryPlan,
    Transcript,
    Variant,
    alice_extract_answer,
    alice_prepare,
    alice_test_superposition,
    comm_cost,
    honest_reference,
    plan_query,
    query_labels,
    run_protocol,
    run_protocol_exact,
    scenario_states,
    superposition_pass_probability,
    transcript_only,
)
from qpq.qram import Database, generate_database, oracle_direct
from qpq.quantum_core import (
    RegisterLayout,
    StateVector,
    basis_state,
    ket,
    overlap,
    reduced_density,
    relabel,
    tensor,
    to_density,
)

VARIANTS = [Variant.BASIC, Variant.AMPLITUDE, Variant.TWO_QUERY]


@pytest.fixture(scope="module")
def db3():
    return generate_database(3, np.random.default_rng(42))


# --- planning ------------------------------------------------------------------


def test_plan_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(PlanError):
        plan_query(0, 2, rng)
    with pytest.raises(PlanError):
        plan_query(4, 2, rng)
    with pytest.raises(PlanError):
        plan_query(1, 2, rng, Variant.TWO_QUERY, k=1)
    with pytest.raises(PlanError):
        plan_query(1, 2, rng, Variant.AMPLITUDE, alpha=1.0, beta=1.0)
    with pytest.raises(PlanError):
        plan_query(1, 1, rng, Variant.TWO_QUERY)
    with pytest.raises(PlanError):
        plan_query(1, 2, rng, scenario="C")
    with pytest.raises(PlanError):
        QueryPlan(2, 1, Variant.BASIC, 0, 0.6, 0.8, (PLAIN, SUPER))


def test_scenario_frequencies():
    rng = np.random.default_rng(1)
    scen = [plan_query(1, 2, rng).scenario for _ in range(4000)]
    assert abs(scen.count("A") / 4000 - 0.5) < 0.03


def test_two_query_plan():
    rng = np.random.default_rng(2)
    plans = [plan_query(3, 3, rng, Variant.TWO_QUERY) for _ in range(200)]
    assert all(p.k not in (0, 3) for p in plans)
    assert {p.order for p in plans} == {
        (a, b, c) for a in (PLAIN, SUPER, DECOY) for b in (PLAIN, SUPER, DECOY) for c in (PLAIN, SUPER, DECOY)
        if len({a, b, c}) == 3
    }


def test_amplitude_plan_is_random_qubit():
    plan = plan_query(2, 2, np.random.default_rng(3), Variant.AMPLITUDE)
    assert abs(abs(plan.alpha) ** 2 + abs(plan.beta) ** 2 - 1) < 1e-12
    assert abs(plan.alpha - 1 / math.sqrt(2)) > 1e-6


def test_alice_prepare_states():
    plan = plan_query(3, 2, np.random.default_rng(0), scenario="B")
    sent = alice_prepare(plan)
    assert [role for role, _ in sent] == [SUPER, PLAIN]
    sup = sent[0][1].amplitudes
    assert np.allclose(sup, np.array([1, 0, 0, 1]) / math.sqrt(2))


# --- overlap facts -------------------------------------------------------------


def test_plain_vs_superposed_overlap():
    N = 8
    lay = RegisterLayout.of(("Q", N))
    plain = ket("Q", N, 5)
    amps = np.zeros(N)
    amps[[0, 5]] = 1 / math.sqrt(2)
    sup = StateVector(lay, amps)
    assert abs(abs(overlap(plain, sup)) - 1 / math.sqrt(2)) < 1e-12


def test_basis_reply_passes_superposition_test_half_the_time(db3):
    # an honest-looking |j>|A_j> checked against the superposition reference
    for j in range(1, db3.N):
        plan = plan_query(j, 3, np.random.default_rng(j), scenario="A")
        ref = honest_reference(plan, db3[j])
        reply = basis_state(RegisterLayout.of(("Q", 8), ("R", 2)), [j, db3[j]])
        assert abs(superposition_pass_probability(reply, ref) - 0.5) < 1e-10
        assert abs(superposition_pass_probability(to_density(reply), ref) - 0.5) < 1e-10


# --- honest runs ---------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_honest_exact_pass_is_one(db3, variant):
    rng = np.random.default_rng(7)
    for j in range(1, db3.N):
        for _ in range(3):
            plan = plan_query(j, 3, rng, variant)
            run = run_protocol_exact(db3, plan, honest_strategy())
            assert abs(run.pass_probability - 1) < 1e-10


@pytest.mark.parametrize("variant", VARIANTS)
def test_honest_sampled_runs(db3, variant):
    rng = np.random.default_rng(8)
    for j in range(1, db3.N):
        for _ in range(20):
            plan = plan_query(j, 3, rng, variant)
            out, tr = run_protocol(db3, plan, honest_strategy(), rng)
            assert out.answer == db3[j]
            assert not out.detected_cheating
            if variant is Variant.TWO_QUERY:
                assert out.decoy_answer == db3[plan.k]
            assert tr.db_calls == len(plan.order)


def test_honest_reference_matches_oracle(db3):
    plan = plan_query(5, 3, np.random.default_rng(0), Variant.AMPLITUDE)
    ref = honest_reference(plan, db3[5])
    for role, q in alice_prepare(plan):
        reply = oracle_direct(tensor(q, ket("R", 2)), db3)
        assert abs(abs(overlap(reply, ref.for_role(role))) - 1) < 1e-12


def test_two_query_reference_needs_decoy_value(db3):
    plan = plan_query(1, 3, np.random.default_rng(0), Variant.TWO_QUERY)
    with pytest.raises(PlanError):
        honest_reference(plan, db3[1])


def test_alice_side_helpers(db3):
    rng = np.random.default_rng(4)
    plan = plan_query(6, 3, rng)
    ref = honest_reference(plan, db3[6])
    reply = oracle_direct(tensor(ket("Q", 8, 6), ket("R", 2)), db3)
    assert alice_extract_answer(reply, plan, rng) == (db3[6], True)
    assert alice_test_superposition(ref.psi_super, ref, rng)
    joint = run_protocol_exact(db3, plan, honest_strategy())
    q, r = query_labels(plan.position(SUPER))
    rho = reduced_density(joint.state, [q, r])
    assert superposition_pass_probability(rho, ref, q=q, r=r) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(QPQError):
        superposition_pass_probability(rho, ref)


# --- transcript ----------------------------------------------------------------


def test_transcript_alternation():
    t = Transcript(2)
    regs = (("Q1", 4), ("R1", 2))
    with pytest.raises(ProtocolViolation):
        t.reply(regs)
    t.send(regs)
    with pytest.raises(ProtocolViolation):
        t.send((("Q2", 4), ("R2", 2)))
    t.reply(regs)
    assert t.complete and t.sends == 1
    assert t.total_qubits == 3


def test_comm_cost_rejects_incomplete():
    t = Transcript(2)
    t.send((("Q1", 4), ("R1", 2)))
    with pytest.raises(ProtocolViolation):
        comm_cost(t)


def test_timing_check_flags_early_query():
    t = Transcript(2)
    t.send((("Q1", 4), ("R1", 2)))
    t.reply((("Q1", 4),))
    t.send((("Q2", 4), ("R2", 2)))
    t.reply((("Q2", 4), ("R2", 2)))
    with pytest.raises(ProtocolViolation):
        t.check_timing()


@pytest.mark.parametrize("n", [1, 2, 3, 7, 20])
def test_counters(n):
    if n <= 7:
        db = generate_database(n, np.random.default_rng(n))
    else:
        db = Database(n, np.zeros(2**n, dtype=np.int64))
    plan = plan_query(1, n, np.random.default_rng(0))
    c = comm_cost(transcript_only(db, plan, honest_strategy()))
    assert c.total_qubits == 2 * (n + 1)
    assert c.leg_qubits == 4 * (n + 1)
    assert c.db_calls == 2
    assert c.spir_exchange == 2**n


def test_two_query_counters():
    db = generate_database(3, np.random.default_rng(0))
    plan = plan_query(1, 3, np.random.default_rng(0), Variant.TWO_QUERY)
    c = comm_cost(transcript_only(db, plan, honest_strategy()))
    assert (c.total_qubits, c.leg_qubits, c.db_calls) == (12, 24, 3)


def test_simulated_and_dry_transcripts_agree(db3):
    plan = plan_query(2, 3, np.random.default_rng(0))
    _, tr = run_protocol(db3, plan, honest_strategy(), np.random.default_rng(1))
    dry = transcript_only(db3, plan, honest_strategy())
    assert tr.messages == dry.messages
    assert comm_cost(tr) == comm_cost(dry)


def test_width_mismatch(db3):
    plan = plan_query(1, 2, np.random.default_rng(0))
    with pytest.raises(PlanError):
        run_protocol_exact(db3, plan, honest_strategy())


# --- a misbehaving server ------------------------------------------------------


class _Swallow:
    """Bob keeps the answer register: the reply has a different layout."""

    name = "swallow"

    def __init__(self):
        self.ancilla = RegisterLayout.of(("B", 1))
        self.db_calls = 0
        self.record = {}

    def respond(self, state, index, q, r):
        return relabel(state, {r: f"kept{index}"})

    def session(self, db, rng=None):
        return self

    exact_session = session


def test_layout_change_is_a_violation(db3):
    plan = plan_query(1, 3, np.random.default_rng(0))
    out, tr = run_protocol(db3, plan, _Swallow(), np.random.default_rng(0))
    assert tr.violation is not None
    assert out.detected_cheating
    assert run_protocol_exact(db3, plan, _Swallow()).pass_probability == 0.0


# --- joint query states --------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3])
def test_scenario_states_gram(n):
    # blocks for different j are orthogonal; within a block the overlap is 1/2
    states = [(j, s) for j in range(1, 2**n) for s in ("A", "B")]
    vecs = {(j, s): scenario_states(n, j)[s].amplitudes for j, s in states}
    for a in states:
        for b in states:
            g = abs(np.vdot(vecs[a], vecs[b]))
            expected = 1.0 if a == b else (0.5 if a[0] == b[0] else 0.0)
            assert g == pytest.approx(expected, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 5), data=st.data())
def test_honest_completeness_property(n, data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    db = generate_database(n, rng)
    j = data.draw(st.integers(1, 2**n - 1))
    variant = data.draw(st.sampled_from(VARIANTS if n > 1 else VARIANTS[:2]))  # two-query needs N >= 3
    plan = plan_query(j, n, rng, variant)
    assert run_protocol_exact(db, plan, honest_strategy()).pass_probability == pytest.approx(1.0, abs=1e-10)
    out, _ = run_protocol(db, plan, honest_strategy(), rng)
    assert out.answer == db[j] and not out.detected_cheating
