"""Dense state-vector and density-matrix primitives over labeled registers.

Registers are ordered; the leftmost register is the most significant factor of
the Kronecker product, so the basis index of ``|a>_X |b>_Y`` with dims
``(dx, dy)`` is ``a * dy + b``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, QPQError

ATOL = 1e-10
EIG_CLAMP = 1e-12


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered tuple of ``(label, dim)`` pairs."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self):
        regs = tuple((str(lab), int(d)) for lab, d in self.registers)
        object.__setattr__(self, "registers", regs)
        labels = tuple(lab for lab, _ in regs)
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate register labels in {list(labels)}")
        for lab, d in regs:
            if d < 1:
                raise LayoutError(f"register {lab!r} has non-positive dimension {d}")
        object.__setattr__(self, "_labels", labels)
        object.__setattr__(self, "_dims", tuple(d for _, d in regs))
        object.__setattr__(self, "_dim", math.prod(d for _, d in regs))

    @classmethod
    def of(cls, *registers: tuple[str, int]) -> "RegisterLayout":
        try:
            return _layout(tuple(registers))
        except TypeError:  # unhashable entries
            return cls(tuple(registers))

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self):
        return len(self.registers)

    def __contains__(self, label):
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown register {label!r}; layout has {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.registers[self.index(label)][1]

    def axes(self, labels: Iterable[str]) -> list[int]:
        return [self.index(lab) for lab in labels]

    def select(self, labels: Iterable[str]) -> "RegisterLayout":
        return _layout(tuple((lab, self.dim_of(lab)) for lab in labels))

    def without(self, labels: Iterable[str]) -> "RegisterLayout":
        drop = set(labels)
        return _layout(tuple(r for r in self.registers if r[0] not in drop))

    def __add__(self, other: "RegisterLayout") -> "RegisterLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"register label collision: {sorted(clash)}")
        return _layout(self.registers + other.registers)


@functools.lru_cache(maxsize=4096)
def _layout(registers: tuple[tuple[str, int], ...]) -> RegisterLayout:
    return RegisterLayout(registers)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state on a register layout."""

    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.layout.dim:
            raise LayoutError(
                f"amplitude vector has length {amps.shape[0]}, layout needs {self.layout.dim}"
            )
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > ATOL:
            raise QPQError(f"state is not normalized (squared norm {norm2!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per register."""
        return self.amplitudes.reshape(self.layout.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __repr__(self):
        return f"StateVector({self.layout.registers})"


def _trusted(layout: RegisterLayout, amplitudes: np.ndarray) -> StateVector:
    """Wrap amplitudes produced by a norm-preserving operation without re-validating."""
    out = object.__new__(StateVector)
    object.__setattr__(out, "layout", layout)
    object.__setattr__(out, "amplitudes", amplitudes)
    return out


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator on a layout."""

    layout: RegisterLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if m.shape != (d, d):
            raise LayoutError(f"density matrix has shape {m.shape}, layout needs {(d, d)}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > ATOL:
            raise QPQError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > ATOL:
            raise QPQError(f"density matrix has trace {tr!r}")
        if np.linalg.eigvalsh(m).min() < -ATOL:
            raise QPQError("density matrix has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def __repr__(self):
        return f"DensityMatrix({self.layout.registers})"


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """Square matrix checked for unitarity on construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LayoutError(f"unitary must be square, got shape {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])), initial=0.0)
        if err > ATOL:
            raise QPQError(f"matrix is not unitary (max |U^dag U - I| = {err:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def H(self) -> "UnitaryMatrix":
        return UnitaryMatrix(self.matrix.conj().T)

    def __matmul__(self, other: "UnitaryMatrix") -> "UnitaryMatrix":
        return UnitaryMatrix(self.matrix @ other.matrix)


@dataclass(frozen=True)
class Ensemble:
    """Finite ensemble ``{(p_i, rho_i)}`` with a common layout."""

    members: tuple[tuple[float, DensityMatrix], ...]

    def __post_init__(self):
        members = tuple((float(p), rho) for p, rho in self.members)
        if not members:
            raise QPQError("ensemble is empty")
        layout = members[0][1].layout
        for p, rho in members:
            if rho.layout != layout:
                raise LayoutError("ensemble members have different layouts")
            if p < -ATOL or p > 1 + ATOL:
                raise QPQError(f"ensemble probability {p} outside [0, 1]")
        total = sum(p for p, _ in members)
        if abs(total - 1.0) > ATOL:
            raise QPQError(f"ensemble probabilities sum to {total}")
        object.__setattr__(self, "members", members)

    @classmethod
    def uniform(cls, states: Sequence[DensityMatrix]) -> "Ensemble":
        p = 1.0 / len(states)
        return cls(tuple((p, s) for s in states))

    @property
    def layout(self) -> RegisterLayout:
        return self.members[0][1].layout


# --- construction -----------------------------------------------------------


def ket(label: str, dim: int, index: int = 0) -> StateVector:
    """Computational basis state ``|index>`` of a single register."""
    if not 0 <= index < dim:
        raise LayoutError(f"basis index {index} out of range for dim {dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[index] = 1.0
    return _trusted(_layout(((label, dim),)), amps)


def basis_state(layout: RegisterLayout, values: Sequence[int]) -> StateVector:
    if len(values) != len(layout):
        raise LayoutError(f"need {len(layout)} basis values, got {len(values)}")
    amps = np.zeros(layout.dim, dtype=complex)
    amps[np.ravel_multi_index(tuple(values), layout.dims)] = 1.0
    return StateVector(layout, amps)


def from_amplitudes(layout: RegisterLayout, amplitudes, normalize: bool = False) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if normalize:
        amps = amps / np.linalg.norm(amps)
    return StateVector(layout, amps)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; ``a``'s registers come first."""
    return _trusted(a.layout + b.layout, np.outer(a.amplitudes, b.amplitudes).reshape(-1))


def relabel(state: StateVector, mapping: dict[str, str]) -> StateVector:
    layout = _layout(tuple((mapping.get(lab, lab), d) for lab, d in state.layout.registers))
    return _trusted(layout, state.amplitudes)


def reorder(state: StateVector, labels: Sequence[str]) -> StateVector:
    """Permute registers into the given label order."""
    if sorted(labels) != sorted(state.layout.labels):
        raise LayoutError(f"reorder needs a permutation of {state.layout.labels}, got {labels}")
    axes = state.layout.axes(labels)
    t = np.transpose(state.tensor(), axes)
    return _trusted(state.layout.select(labels), t.reshape(-1))


def _to_front(state: StateVector, targets: Sequence[str]) -> tuple[np.ndarray, list[int]]:
    axes = state.layout.axes(targets)
    if len(set(axes)) != len(axes):
        raise LayoutError(f"repeated target registers {list(targets)}")
    rest = [i for i in range(len(state.layout)) if i not in axes]
    t = np.transpose(state.tensor(), axes + rest)
    return t, axes


def _from_front(t: np.ndarray, axes: list[int], layout: RegisterLayout) -> np.ndarray:
    rest = [i for i in range(len(layout)) if i not in axes]
    inv = np.argsort(axes + rest)
    return np.transpose(t, inv).reshape(layout.dim)


def apply_matrix(state: StateVector, matrix: np.ndarray, targets: Sequence[str]) -> StateVector:
    """Apply ``matrix`` to the listed registers (in that order), identity elsewhere."""
    t, axes = _to_front(state, targets)
    dt = math.prod(t.shape[: len(axes)])
    if matrix.shape != (dt, dt):
        raise LayoutError(
            f"operator of dim {matrix.shape[0]} does not match targets {list(targets)} of dim {dt}"
        )
    shape = t.shape
    out = (matrix @ t.reshape(dt, -1)).reshape(shape)
    return _trusted(state.layout, _from_front(out, axes, state.layout))


def apply_unitary(state: StateVector, u: UnitaryMatrix, targets: Sequence[str]) -> StateVector:
    return apply_matrix(state, u.matrix, targets)


def apply_basis_map(state: StateVector, perm: np.ndarray, targets: Sequence[str]) -> StateVector:
    """Apply the permutation unitary ``|x> -> |perm[x]>`` on the target registers.

    ``x`` is the joint basis index of the targets in the listed order.
    """
    t, axes = _to_front(state, targets)
    shape = t.shape
    dt = math.prod(shape[: len(axes)])
    perm = np.asarray(perm)
    if perm.shape != (dt,):
        raise LayoutError(f"basis map of size {perm.shape} does not match target dim {dt}")
    hit = np.zeros(dt, dtype=bool)
    hit[perm] = True
    if not hit.all():
        raise LayoutError("basis map is not a permutation")
    flat = t.reshape(dt, -1)
    out = np.empty_like(flat)
    out[perm] = flat
    return _trusted(state.layout, _from_front(out.reshape(shape), axes, state.layout))


# --- measurement ------------------------------------------------------------


def _split3(state: StateVector, target: str) -> np.ndarray:
    """View amplitudes as ``(left, dim(target), right)``."""
    layout = state.layout
    k = layout.index(target)
    dims = layout.dims
    return state.amplitudes.reshape(math.prod(dims[:k]), dims[k], math.prod(dims[k + 1:]))


def born_probabilities(state: StateVector, target: str) -> np.ndarray:
    t = _split3(state, target)
    probs = (t.real**2 + t.imag**2).sum(axis=(0, 2))
    total = probs.sum()
    if abs(total - 1.0) > 1e-8:
        raise QPQError(f"Born weights sum to {total}")
    return probs


def project(state: StateVector, target: str, outcome: int) -> tuple[StateVector, float]:
    """Collapse ``target`` onto ``|outcome>``; returns the renormalized state and its weight."""
    t = _split3(state, target)
    if not 0 <= outcome < t.shape[1]:
        raise LayoutError(f"outcome {outcome} out of range for register {target!r}")
    sel = t[:, outcome, :]
    p = float((sel.real**2 + sel.imag**2).sum())
    if p <= 0.0:
        raise QPQError(f"outcome {outcome} on {target!r} has zero probability")
    out = np.zeros_like(t)
    out[:, outcome, :] = sel / np.sqrt(p)
    return _trusted(state.layout, out.reshape(-1)), p


def measure_computational(
    state: StateVector, target: str, rng: np.random.Generator
) -> tuple[int, StateVector, float]:
    """Projective measurement of one register in the computational basis."""
    t = _split3(state, target)
    probs = (t.real**2 + t.imag**2).sum(axis=(0, 2))
    cdf = np.cumsum(probs)
    if abs(cdf[-1] - 1.0) > 1e-8:
        raise QPQError(f"Born weights sum to {cdf[-1]}")
    outcome = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(probs) - 1)
    p = float(probs[outcome])
    out = np.zeros_like(t)
    out[:, outcome, :] = t[:, outcome, :] / np.sqrt(p)
    return outcome, _trusted(state.layout, out.reshape(-1)), p


def split_off(state: StateVector, labels: Sequence[str], index: int) -> StateVector:
    """Remove registers known to sit in the joint basis state ``index``.

    Raises if the registers are not (to within 1e-10) in that product state.
    """
    t, _ = _to_front(state, labels)
    k = len(labels)
    dt = math.prod(t.shape[:k])
    flat = t.reshape(dt, -1)
    rest = flat[index]
    leak = 1.0 - float(np.vdot(rest, rest).real)
    if leak > ATOL:
        raise QPQError(f"registers {list(labels)} are not in basis state {index} (leak {leak:.3e})")
    rest_layout = state.layout.without(labels)
    return _trusted(rest_layout, rest.reshape(-1))


# --- mixed states -----------------------------------------------------------


def to_density(state: StateVector) -> DensityMatrix:
    a = state.amplitudes
    return DensityMatrix(state.layout, np.outer(a, a.conj()))


def mix(ensemble: Ensemble) -> DensityMatrix:
    m = sum(p * rho.matrix for p, rho in ensemble.members)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(ensemble.layout, m)


def partial_trace(rho: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Trace out every register not in ``keep``; the result follows ``keep``'s order."""
    keep = list(keep)
    if not keep:
        raise LayoutError("partial_trace needs at least one register to keep")
    layout = rho.layout
    axes = layout.axes(keep)
    rest = [i for i in range(len(layout)) if i not in axes]
    dims = layout.dims
    dk = int(np.prod([dims[i] for i in axes]))
    dr = int(np.prod([dims[i] for i in rest])) if rest else 1
    t = rho.matrix.reshape(dims + dims)
    nreg = len(dims)
    perm = axes + rest + [nreg + i for i in axes] + [nreg + i for i in rest]
    t = np.transpose(t, perm).reshape(dk, dr, dk, dr)
    red = np.einsum("iaja->ij", t)
    return DensityMatrix(layout.select(keep), 0.5 * (red + red.conj().T))


def reduced_matrix(state: StateVector, keep: Sequence[str]) -> np.ndarray:
    t, axes = _to_front(state, keep)
    dk = math.prod(t.shape[: len(axes)])
    m = t.reshape(dk, -1)
    red = m @ m.conj().T
    return 0.5 * (red + red.conj().T)


def reduced_density(state: StateVector, keep: Sequence[str]) -> DensityMatrix:
    """Reduced state of a pure state without forming the full density matrix."""
    keep = list(keep)
    if not keep:
        raise LayoutError("reduced_density needs at least one register to keep")
    return DensityMatrix(state.layout.select(keep), reduced_matrix(state, keep))


def overlap(a: StateVector, b: StateVector) -> complex:
    """Inner product <a|b>."""
    if a.layout != b.layout:
        raise LayoutError(f"layout mismatch: {a.layout.registers} vs {b.layout.registers}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def expectation_of_state(rho: DensityMatrix | StateVector, psi: StateVector) -> float:
    """<psi| rho |psi>, i.e. the probability of passing a test projecting onto psi."""
    if rho.layout != psi.layout:
        raise LayoutError(f"layout mismatch: {rho.layout.registers} vs {psi.layout.registers}")
    v = psi.amplitudes
    if isinstance(rho, StateVector):
        return float(abs(np.vdot(v, rho.amplitudes)) ** 2)
    return float(np.real(np.vdot(v, rho.matrix @ v)))


def subsystem_pass_probability(state: StateVector, psi: StateVector, labels: Sequence[str]) -> float:
    """Probability that projecting ``labels`` of ``state`` onto ``psi`` succeeds.

    Equivalent to ``<psi| Tr_rest(|state><state|) |psi>`` without forming the
    reduced density matrix.
    """
    if psi.layout.dims != tuple(state.layout.dim_of(lab) for lab in labels):
        raise LayoutError(f"test state {psi.layout.registers} does not match registers {list(labels)}")
    t, axes = _to_front(state, labels)
    dk = psi.dim
    v = psi.amplitudes.conj() @ t.reshape(dk, -1)
    return float(np.vdot(v, v).real)


# --- information measures ---------------------------------------------------


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.where(w > EIG_CLAMP, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann root fidelity Tr sqrt(sqrt(rho) sigma sqrt(rho)), in [0, 1]."""
    if rho.dim != sigma.dim:
        raise LayoutError(f"fidelity of states with dims {rho.dim} and {sigma.dim}")
    s = _psd_sqrt(rho.matrix)
    inner = s @ sigma.matrix @ s
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sum(np.sqrt(np.where(w > EIG_CLAMP, w, 0.0))))
    return min(f, 1.0)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy in bits."""
    w = np.linalg.eigvalsh(rho.matrix)
    w = w[w > EIG_CLAMP]
    return float(max(-np.sum(w * np.log2(w)), 0.0))


def holevo_chi(ensemble: Ensemble) -> float:
    """S(sum p_i rho_i) - sum p_i S(rho_i), in bits."""
    avg = mix(ensemble)
    return von_neumann_entropy(avg) - sum(p * von_neumann_entropy(r) for p, r in ensemble.members)


# --- random sampling --------------------------------------------------------


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryMatrix:
    """Haar-random unitary: QR of a complex Ginibre matrix with the phase fix on R."""
    if dim < 1:
        raise LayoutError(f"unitary dimension must be positive, got {dim}")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return UnitaryMatrix(q * (d / np.abs(d)))


def random_state(layout: RegisterLayout, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state (a column of a Haar unitary)."""
    z = rng.standard_normal(layout.dim) + 1j * rng.standard_normal(layout.dim)
    return StateVector(layout, z / np.linalg.norm(z))


def random_density(layout: RegisterLayout, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state from the Hilbert-Schmidt (Ginibre) measure."""
    d = layout.dim
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix(layout, 0.5 * (m + m.conj().T))


def unitary_with_first_column(column: np.ndarray) -> UnitaryMatrix:
    """A unitary whose first column is the given unit vector (phased Householder)."""
    t = np.asarray(column, dtype=complex)
    t = t / np.linalg.norm(t)
    phase = t[0] / abs(t[0]) if abs(t[0]) > 1e-15 else 1.0
    t = t / phase
    e0 = np.zeros_like(t)
    e0[0] = 1.0
    v = e0 - t
    nv = np.vdot(v, v).real
    if nv < 1e-30:
        h = np.eye(len(t), dtype=complex)
    else:
        h = np.eye(len(t), dtype=complex) - 2.0 * np.outer(v, v.conj()) / nv
    return UnitaryMatrix(phase * h)


def embed(u: np.ndarray, u_targets: Sequence[str], layout: RegisterLayout) -> np.ndarray:
    """Dense matrix of ``u`` (on ``u_targets``) lifted to act on all of ``layout``."""
    d = layout.dim
    cols = np.eye(d, dtype=complex)
    out = np.empty((d, d), dtype=complex)
    for c in range(d):
        s = StateVector(layout, cols[:, c])
        out[:, c] = apply_matrix(s, u, u_targets).amplitudes
    return out
