import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpq.errors import LayoutError, QPQError
from qpq.quantum_core import (
    DensityMatrix,
    Ensemble,
    RegisterLayout,
    StateVector,
    UnitaryMatrix,
    apply_basis_map,
    apply_matrix,
    apply_unitary,
    basis_state,
    born_probabilities,
    embed,
    expectation_of_state,
    fidelity,
    holevo_chi,
    ket,
    measure_computational,
    mix,
    overlap,
    partial_trace,
    project,
    random_density,
    random_state,
    random_unitary,
    reduced_density,
    relabel,
    reorder,
    split_off,
    subsystem_pass_probability,
    tensor,
    to_density,
    unitary_with_first_column,
    von_neumann_entropy,
)

seeds = st.integers(0, 2**32 - 1)
small_dims = st.integers(1, 4)


def _layout(*dims):
    return RegisterLayout.of(*((f"r{i}", d) for i, d in enumerate(dims)))


# --- layouts -------------------------------------------------------------------


def test_layout_basics():
    lay = RegisterLayout.of(("Q", 4), ("R", 2))
    assert lay.labels == ("Q", "R")
    assert lay.dims == (4, 2)
    assert lay.dim == 8
    assert "Q" in lay and "X" not in lay
    assert lay.select(["R"]).labels == ("R",)
    assert lay.without(["Q"]).labels == ("R",)


def test_layout_rejects_duplicates_and_bad_dims():
    with pytest.raises(LayoutError):
        RegisterLayout.of(("Q", 2), ("Q", 2))
    with pytest.raises(LayoutError):
        RegisterLayout.of(("Q", 0))
    with pytest.raises(LayoutError):
        RegisterLayout.of(("Q", 2)) + RegisterLayout.of(("Q", 3))


def test_unknown_label():
    with pytest.raises(LayoutError):
        RegisterLayout.of(("Q", 2)).index("R")


# --- construction --------------------------------------------------------------


def test_state_must_be_normalized():
    with pytest.raises(QPQError):
        StateVector(_layout(2), [1.0, 1.0])
    with pytest.raises(LayoutError):
        StateVector(_layout(2), [1.0, 0.0, 0.0])


def test_ket_and_basis_state_ordering():
    # the leftmost register is the most significant factor
    s = basis_state(RegisterLayout.of(("A", 2), ("B", 3)), [1, 2])
    assert np.argmax(np.abs(s.amplitudes)) == 1 * 3 + 2
    assert np.allclose(tensor(ket("A", 2, 1), ket("B", 3, 2)).amplitudes, s.amplitudes)


def test_reorder_and_relabel():
    s = tensor(ket("A", 2, 1), ket("B", 3, 2))
    t = reorder(s, ["B", "A"])
    assert t.layout.labels == ("B", "A")
    assert np.argmax(np.abs(t.amplitudes)) == 2 * 2 + 1
    assert relabel(s, {"A": "X"}).layout.labels == ("X", "B")


def test_density_validation():
    lay = _layout(2)
    with pytest.raises(QPQError):
        DensityMatrix(lay, np.array([[1, 0.5], [0, 0]]))
    with pytest.raises(QPQError):
        DensityMatrix(lay, np.eye(2))
    with pytest.raises(QPQError):
        DensityMatrix(lay, np.diag([1.5, -0.5]))


def test_unitary_validation():
    with pytest.raises(QPQError):
        UnitaryMatrix(np.array([[1, 1], [0, 1]]))
    with pytest.raises(LayoutError):
        UnitaryMatrix(np.ones((2, 3)))


# --- transformations -----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d1=small_dims, d2=small_dims)
def test_apply_unitary_matches_kron(seed, d1, d2):
    rng = np.random.default_rng(seed)
    s = random_state(_layout(d1, d2), rng)
    u = random_unitary(d2, rng)
    out = apply_unitary(s, u, ["r1"])
    ref = np.kron(np.eye(d1), u.matrix) @ s.amplitudes
    assert np.allclose(out.amplitudes, ref, atol=1e-12)
    assert abs(out.norm() - 1) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_apply_matrix_on_reversed_targets(seed):
    rng = np.random.default_rng(seed)
    lay = _layout(2, 3)
    s = random_state(lay, rng)
    u = random_unitary(6, rng)
    # acting on (r1, r0) is the same as conjugating by the swap
    out = apply_matrix(s, u.matrix, ["r1", "r0"])
    swapped = reorder(s, ["r1", "r0"])
    ref = reorder(_wrap(RegisterLayout.of(("r1", 3), ("r0", 2)), u.matrix @ swapped.amplitudes), ["r0", "r1"])
    assert np.allclose(out.amplitudes, ref.amplitudes, atol=1e-12)


def _wrap(layout, amps):
    return StateVector(layout, amps)


def test_apply_basis_map_is_permutation():
    s = random_state(_layout(4), np.random.default_rng(0))
    perm = np.array([2, 0, 3, 1])
    out = apply_basis_map(s, perm, ["r0"])
    assert np.allclose(out.amplitudes[perm], s.amplitudes)
    with pytest.raises(LayoutError):
        apply_basis_map(s, np.array([0, 0, 1, 2]), ["r0"])


def test_embed_matches_kron():
    rng = np.random.default_rng(3)
    u = random_unitary(3, rng).matrix
    m = embed(u, ["r1"], _layout(2, 3))
    assert np.allclose(m, np.kron(np.eye(2), u))


# --- measurement ---------------------------------------------------------------


def test_born_and_project():
    s = StateVector(_layout(2, 2), np.array([0.6, 0, 0, 0.8]))
    assert np.allclose(born_probabilities(s, "r0"), [0.36, 0.64])
    t, p = project(s, "r0", 1)
    assert p == pytest.approx(0.64)
    assert np.allclose(t.amplitudes, [0, 0, 0, 1])
    with pytest.raises(QPQError):
        project(ket("q", 2, 0), "q", 1)


def test_measurement_statistics():
    rng = np.random.default_rng(11)
    s = StateVector(_layout(3), np.sqrt([0.2, 0.3, 0.5]))
    counts = np.bincount([measure_computational(s, "r0", rng)[0] for _ in range(20000)], minlength=3)
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - [0.2, 0.3, 0.5]) < 4 * np.sqrt(0.25 / 20000))


def test_split_off():
    s = tensor(random_state(_layout(3), np.random.default_rng(1)), ket("P", 4, 2))
    out = split_off(s, ["P"], 2)
    assert out.layout.labels == ("r0",)
    with pytest.raises(QPQError):
        split_off(s, ["P"], 0)


# --- mixed states --------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d1=small_dims, d2=small_dims, d3=small_dims)
def test_partial_trace_matches_pure_reduction(seed, d1, d2, d3):
    rng = np.random.default_rng(seed)
    s = random_state(_layout(d1, d2, d3), rng)
    full = to_density(s)
    for keep in (["r0"], ["r2", "r0"], ["r1", "r2"]):
        a = partial_trace(full, keep)
        b = reduced_density(s, keep)
        assert a.layout == b.layout
        assert np.allclose(a.matrix, b.matrix, atol=1e-12)
        assert abs(np.trace(a.matrix) - 1) < 1e-12


def test_partial_trace_of_product():
    rng = np.random.default_rng(5)
    a = random_density(_layout(2), rng)
    b = random_density(RegisterLayout.of(("x", 3)), rng)
    joint = DensityMatrix(RegisterLayout.of(("r0", 2), ("x", 3)), np.kron(a.matrix, b.matrix))
    assert np.allclose(partial_trace(joint, ["x"]).matrix, b.matrix)
    assert np.allclose(partial_trace(joint, ["r0"]).matrix, a.matrix)


def test_expectation_and_subsystem_pass():
    rng = np.random.default_rng(2)
    s = random_state(_layout(2, 3), rng)
    psi = random_state(_layout(2), rng)
    rho = reduced_density(s, ["r0"])
    assert subsystem_pass_probability(s, psi, ["r0"]) == pytest.approx(expectation_of_state(rho, psi), abs=1e-12)
    assert expectation_of_state(psi, psi) == pytest.approx(1.0)


def test_overlap_layout_mismatch():
    with pytest.raises(LayoutError):
        overlap(ket("a", 2), ket("b", 2))


# --- information measures ------------------------------------------------------


def test_fidelity_known_values():
    lay = _layout(2)
    zero = to_density(ket("r0", 2, 0))
    one = to_density(ket("r0", 2, 1))
    plus = to_density(StateVector(lay, [math.sqrt(0.5), math.sqrt(0.5)]))
    mixed = DensityMatrix(lay, np.eye(2) / 2)
    assert fidelity(zero, one) == pytest.approx(0.0, abs=1e-12)
    assert fidelity(zero, plus) == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert fidelity(zero, mixed) == pytest.approx(math.sqrt(0.5), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(2, 5))
def test_fidelity_properties(seed, d):
    rng = np.random.default_rng(seed)
    lay = _layout(d)
    a, b = random_density(lay, rng), random_density(lay, rng)
    f = fidelity(a, b)
    assert 0 <= f <= 1
    assert f == pytest.approx(fidelity(b, a), abs=1e-8)
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-8)
    u = random_unitary(d, rng).matrix
    ua = DensityMatrix(lay, u @ a.matrix @ u.conj().T)
    ub = DensityMatrix(lay, u @ b.matrix @ u.conj().T)
    assert fidelity(ua, ub) == pytest.approx(f, abs=1e-8)


def test_fidelity_pure_states_is_overlap():
    rng = np.random.default_rng(4)
    a, b = random_state(_layout(3), rng), random_state(_layout(3), rng)
    assert fidelity(to_density(a), to_density(b)) == pytest.approx(abs(overlap(a, b)), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, d=st.integers(1, 6))
def test_entropy_bounds(seed, d):
    rho = random_density(_layout(d), np.random.default_rng(seed))
    s = von_neumann_entropy(rho)
    assert -1e-10 <= s <= math.log2(d) + 1e-10


def test_entropy_known_values():
    assert von_neumann_entropy(to_density(ket("q", 4, 1))) == pytest.approx(0.0, abs=1e-12)
    assert von_neumann_entropy(DensityMatrix(_layout(4), np.eye(4) / 4)) == pytest.approx(2.0)


def test_holevo_orthogonal_and_identical():
    states = [to_density(ket("r0", 4, i)) for i in range(3)]
    assert holevo_chi(Ensemble.uniform(states)) == pytest.approx(math.log2(3))
    same = [states[0]] * 3
    assert holevo_chi(Ensemble.uniform(same)) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, d=st.integers(2, 4), m=st.integers(1, 5))
def test_holevo_bounds(seed, d, m):
    rng = np.random.default_rng(seed)
    ens = Ensemble.uniform([random_density(_layout(d), rng) for _ in range(m)])
    chi = holevo_chi(ens)
    assert -1e-10 <= chi <= min(math.log2(d), math.log2(m)) + 1e-10


def test_ensemble_validation():
    rho = to_density(ket("q", 2, 0))
    with pytest.raises(QPQError):
        Ensemble(((0.5, rho), (0.4, rho)))
    with pytest.raises(LayoutError):
        Ensemble(((0.5, rho), (0.5, to_density(ket("p", 2, 0)))))
    assert np.allclose(mix(Ensemble(((1.0, rho),))).matrix, rho.matrix)


# --- random sampling -----------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d=st.integers(1, 8))
def test_random_unitary_is_unitary(seed, d):
    u = random_unitary(d, np.random.default_rng(seed)).matrix
    assert np.allclose(u.conj().T @ u, np.eye(d), atol=1e-12)


def test_random_unitary_reproducible():
    a = random_unitary(5, np.random.default_rng(9)).matrix
    b = random_unitary(5, np.random.default_rng(9)).matrix
    assert np.array_equal(a, b)


def test_haar_moments():
    # E|U_00|^2 = 1/d and E|U_00|^4 = 2/(d(d+1)) under the Haar measure
    rng = np.random.default_rng(0)
    d = 3
    x = np.array([abs(random_unitary(d, rng).matrix[0, 0]) ** 2 for _ in range(4000)])
    assert abs(x.mean() - 1 / d) < 0.02
    assert abs((x**2).mean() - 2 / (d * (d + 1))) < 0.02


@settings(max_examples=30, deadline=None)
@given(seed=seeds, d=st.integers(1, 6))
def test_unitary_with_first_column(seed, d):
    rng = np.random.default_rng(seed)
    col = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    u = unitary_with_first_column(col).matrix
    assert np.allclose(u[:, 0], col / np.linalg.norm(col), atol=1e-12)
