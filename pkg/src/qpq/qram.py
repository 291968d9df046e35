"""Bob's database and the coherent lookup ``|j>|r> -> |j>|r xor A_j>``.

Two routes are provided.  :func:`oracle_direct` applies the lookup as a single
basis permutation.  :func:`oracle_via_unary` goes through a bus-position
register ``P``: copy the address into ``P``, read the cell at position ``p``
into ``R``, then uncompute ``P``.  The two must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DatabaseError, LayoutError, QPQError
from .quantum_core import (
    StateVector,
    UnitaryMatrix,
    apply_basis_map,
    ket,
    split_off,
    tensor,
)


@dataclass(frozen=True, eq=False)
class Database:
    """``N = 2**n`` single-bit records; record 0 is the fixed reference ``A_0 = 0``."""

    n: int
    records: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise DatabaseError(f"address width must be at least 1, got {self.n}")
        recs = np.asarray(self.records, dtype=np.int64).reshape(-1)
        if recs.shape[0] != 2**self.n:
            raise DatabaseError(f"expected {2 ** self.n} records for n={self.n}, got {recs.shape[0]}")
        bad = np.flatnonzero((recs != 0) & (recs != 1))
        if bad.size:
            raise DatabaseError(f"record {int(bad[0])} is not a bit: {int(recs[bad[0]])}", record=int(bad[0]))
        if recs[0] != 0:
            raise DatabaseError("record 0 must be 0 (fixed reference value)", record=0)
        recs.setflags(write=False)
        object.__setattr__(self, "records", recs)

    @property
    def N(self) -> int:
        return 2**self.n

    def __getitem__(self, j: int) -> int:
        return int(self.records[j])

    def __eq__(self, other):
        return isinstance(other, Database) and self.n == other.n and np.array_equal(self.records, other.records)

    def __hash__(self):
        return hash((self.n, self.records.tobytes()))

    @cached_property
    def lookup_permutation(self) -> np.ndarray:
        j = np.repeat(np.arange(self.N), 2)
        r = np.tile(np.arange(2), self.N)
        perm = 2 * j + (r ^ self.records[j])
        perm.setflags(write=False)
        return perm

    def to_text(self) -> str:
        return f"n={self.n}\n" + "".join(str(int(b)) for b in self.records) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())


def parse_database(text: str) -> Database:
    """Parse the two-line ``n=<int>`` / bit-string format."""
    lines = text.splitlines()
    if len(lines) < 2:
        raise DatabaseError("database file needs a header line and a record line")
    header = lines[0].strip()
    if not header.startswith("n="):
        raise DatabaseError(f"bad header {header!r}, expected 'n=<int>'")
    try:
        n = int(header[2:])
    except ValueError:
        raise DatabaseError(f"bad header {header!r}, expected 'n=<int>'") from None
    bits = lines[1].strip()
    if n < 1:
        raise DatabaseError(f"address width must be at least 1, got {n}")
    if len(bits) != 2**n:
        raise DatabaseError(f"expected {2 ** n} records for n={n}, got {len(bits)}")
    for i, c in enumerate(bits):
        if c not in "01":
            raise DatabaseError(f"record {i} is {c!r}, expected '0' or '1'", record=i)
    if any(line.strip() for line in lines[2:]):
        raise DatabaseError("unexpected content after the record line")
    return Database(n, np.array([int(c) for c in bits]))


def load_database(path) -> Database:
    return parse_database(Path(path).read_text())


def generate_database(n: int, rng: np.random.Generator) -> Database:
    """Uniformly random records with ``A_0`` forced to 0."""
    recs = rng.integers(0, 2, size=2**n)
    recs[0] = 0
    return Database(n, recs)


def _check_width(state: StateVector, label: str, dim: int):
    got = state.layout.dim_of(label)
    if got != dim:
        raise LayoutError(f"register {label!r} has dim {got}, expected {dim}")


def oracle_permutation(db: Database) -> np.ndarray:
    """Basis map on ``Q (x) R``: index ``2*j + r`` goes to ``2*j + (r ^ A_j)``."""
    return db.lookup_permutation


def oracle_unitary(db: Database) -> UnitaryMatrix:
    perm = oracle_permutation(db)
    m = np.zeros((2 * db.N, 2 * db.N), dtype=complex)
    m[perm, np.arange(2 * db.N)] = 1.0
    return UnitaryMatrix(m)


def oracle_direct(state: StateVector, db: Database, q: str = "Q", r: str = "R") -> StateVector:
    """Coherent lookup written into ``R`` by XOR."""
    _check_width(state, q, db.N)
    _check_width(state, r, 2)
    return apply_basis_map(state, oracle_permutation(db), [q, r])


def unary_encode(state: StateVector, direction: str = "forward", q: str = "Q", p: str = "P") -> StateVector:
    """Copy the address into the bus-position register: ``|j>|p> -> |j>|p xor j>``.

    ``direction="reverse"`` applies the inverse map (the uncomputation).
    """
    dq = state.layout.dim_of(q)
    _check_width(state, p, dq)
    j = np.repeat(np.arange(dq), dq)
    pos = np.tile(np.arange(dq), dq)
    perm = j * dq + (pos ^ j)
    if direction == "reverse":
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        perm = inv
    elif direction != "forward":
        raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    return apply_basis_map(state, perm, [q, p])


def bus_readout(state: StateVector, db: Database, p: str = "P", r: str = "R") -> StateVector:
    """The cell at bus position ``p`` flips ``R``: ``|p>|r> -> |p>|r xor A_p>``."""
    _check_width(state, p, db.N)
    _check_width(state, r, 2)
    return apply_basis_map(state, oracle_permutation(db), [p, r])


def oracle_via_unary(state: StateVector, db: Database, q: str = "Q", r: str = "R", p: str = "P") -> StateVector:
    """Lookup via encode, readout and uncompute on an ancillary bus register."""
    _check_width(state, q, db.N)
    _check_width(state, r, 2)
    s = tensor(state, ket(p, db.N, 0))
    s = unary_encode(s, "forward", q, p)
    s = bus_readout(s, db, p, r)
    s = unary_encode(s, "reverse", q, p)
    try:
        return split_off(s, [p], 0)
    except QPQError as exc:
        raise QPQError(f"bus register was not returned to |0>: {exc}") from exc


@dataclass(frozen=True)
class GateCountReport:
    """Operation counts for one lookup under the two accounting models."""

    n: int
    conventional_ops: int
    addressing_ops: int

    @property
    def ratio(self) -> float:
        return self.conventional_ops / self.addressing_ops


# Activations per address bit in the O(n) design; the constant is a model choice.
ADDRESSING_OPS_PER_BIT = 1


def gate_count(n: int) -> GateCountReport:
    """Conventional routing tree touches ``sum_{k=1..n} 2**k`` nodes; unary addressing ``n``."""
    if n < 1:
        raise ValueError(f"address width must be at least 1, got {n}")
    return GateCountReport(n=n, conventional_ops=2 ** (n + 1) - 2, addressing_ops=ADDRESSING_OPS_PER_BIT * n)


def max_deviation(a: StateVector, b: StateVector) -> float:
    if a.layout != b.layout:
        raise LayoutError("layout mismatch")
    return float(np.max(np.abs(a.amplitudes - b.amplitudes)))

