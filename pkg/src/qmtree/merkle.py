"""Binary-tree commitment over qubit registers via the wide oracle.

Tree geometry: a perfect binary tree with ell = 2^d leaves, nodes numbered
1..2*ell-1 with the root at 1, parent(u) = u // 2 and children (2u, 2u+1).
Node u is a leaf iff u >= ell. Each node carries a b-qubit register; the
payload occupies the leaf registers block by block, and committing fills
every internal register bottom-up by one forward oracle query per node.

Decommitting a node set replays the inverse queries along the lightcone,
root first, checking that each internal ancestor register measures to the
all-zeros string. A failed check is reported as a normal BOT result carrying
the failing node and outcome, not as an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolViolationError, ValidationError
from .oracle import FORWARD, INVERSE, OracleHandle, query
from .qstate import QuantumSystem


def _check_ell(ell: int) -> None:
    if ell < 1 or (ell & (ell - 1)) != 0:
        raise ValidationError(f"leaf count must be a power of two, got {ell}")


def node_count(ell: int) -> int:
    return 2 * ell - 1


def parent(u: int) -> int:
    return u // 2


def children(u: int) -> tuple[int, int]:
    return 2 * u, 2 * u + 1


def is_leaf(u: int, ell: int) -> bool:
    return u >= ell


def depth_of(u: int) -> int:
    return u.bit_length() - 1


def ancestors_P(u: int, ell: int) -> set[int]:
    """The node u together with all of its ancestors up to the root."""
    _check_ell(ell)
    if not 1 <= u <= node_count(ell):
        raise ValidationError(f"node {u} out of range [1, {node_count(ell)}]")
    out = set()
    while u >= 1:
        out.add(u)
        u //= 2
    return out


def frontier_R(S, ell: int) -> set[int]:
    """Nodes in some ancestor path of S, plus the children of any such node."""
    _check_ell(ell)
    nodes = set(S)
    if not nodes:
        raise ValidationError("frontier of an empty node set")
    paths: set[int] = set()
    for u in nodes:
        paths |= ancestors_P(u, ell)
    total = node_count(ell)
    return {v for v in range(1, total + 1) if v in paths or parent(v) in paths}


def leaves_W(qubit_indices, b: int, ell: int) -> set[int]:
    """The leaves holding the 1-indexed payload qubits in ``qubit_indices``."""
    _check_ell(ell)
    n = b * ell
    out = set()
    for s in qubit_indices:
        if not 1 <= s <= n:
            raise ValidationError(f"payload qubit index {s} out of range [1, {n}]")
        out.add(ell + (s - 1) // b)
    return out


def internal_ancestors(S, ell: int) -> list[int]:
    """Internal nodes on the ancestor paths of S, root first (ascending)."""
    acc: set[int] = set()
    for u in set(S):
        acc |= ancestors_P(u, ell)
    return sorted(v for v in acc if v < ell)


def leaf_position(qubit_index: int, b: int, ell: int) -> tuple[int, int]:
    """Map a 1-indexed payload qubit to (leaf node, offset inside the register)."""
    leaf = ell + (qubit_index - 1) // b
    return leaf, (qubit_index - 1) % b


@dataclass
class MerkleLayout:
    """Tree geometry plus the node-to-register map (possibly partial)."""

    b: int
    ell: int
    node_registers: dict[int, list[int]] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.ell.bit_length() - 1

    @property
    def n_payload(self) -> int:
        return self.b * self.ell

    def validate(self) -> None:
        _check_ell(self.ell)
        seen: set[int] = set()
        for u, regs in self.node_registers.items():
            if not 1 <= u <= node_count(self.ell):
                raise ValidationError(f"node {u} out of range")
            if len(regs) != self.b:
                raise ValidationError(f"node {u} register has {len(regs)} labels, expected {self.b}")
            if seen & set(regs):
                raise ValidationError(f"node {u} shares labels with another node")
            seen |= set(regs)


@dataclass
class CommitOutput:
    layout: MerkleLayout
    root_node: int = 1


@dataclass
class DecommitResult:
    ok: bool
    registers: dict[int, list[int]] | None = None
    failed_node: int | None = None
    failed_outcome: str | None = None
    inverse_queries: int = 0


def commit(
    sys: QuantumSystem,
    oracle: OracleHandle,
    payload_labels,
    b: int,
    owner: str = "prover",
) -> CommitOutput:
    """Fill the tree bottom-up; exactly ell - 1 forward queries.

    The payload must already hold the state to be committed and have length
    b * ell for a power-of-two ell (callers pad beforehand; unpadded sizes
    are rejected). Block j of the payload goes to leaf ell + j - 1.
    """
    payload = list(payload_labels)
    n = len(payload)
    if b < 1 or n % b != 0:
        raise ValidationError(f"payload of {n} qubits is not divisible into {b}-qubit blocks")
    ell = n // b
    _check_ell(ell)
    if oracle.lam != 3 * b:
        raise ValidationError(f"oracle arity {oracle.lam} does not match 3b = {3 * b}")
    layout = MerkleLayout(b=b, ell=ell)
    for j in range(1, ell + 1):
        layout.node_registers[ell + j - 1] = payload[(j - 1) * b : j * b]
    for u in range(ell - 1, 0, -1):
        layout.node_registers[u] = sys.alloc_register(b, "0" * b, owner)
        regs = layout.node_registers
        query(oracle, sys, regs[2 * u] + regs[2 * u + 1] + regs[u], FORWARD)
    layout.validate()
    return CommitOutput(layout=layout)


def decommit(
    sys: QuantumSystem,
    oracle: OracleHandle,
    layout: MerkleLayout,
    S,
    rng: np.random.Generator,
) -> DecommitResult:
    """Undo the lightcone of S and check its internal ancestors read zeros.

    ``layout.node_registers`` must cover the whole frontier of S. Inverse
    queries run root-downwards, the exact reverse of the commit order. Returns
    the registers of S on success, or a BOT result naming the first failing
    node otherwise.
    """
    nodes = set(S)
    ell = layout.ell
    _check_ell(ell)
    if not nodes:
        raise ValidationError("decommit of an empty node set")
    for u in nodes:
        if not 1 <= u <= node_count(ell):
            raise ValidationError(f"node {u} out of range [1, {node_count(ell)}]")
    frontier = frontier_R(nodes, ell)
    missing = frontier - set(layout.node_registers)
    if missing:
        raise ProtocolViolationError(f"registers missing for frontier nodes {sorted(missing)}")
    regs = layout.node_registers
    inverse_queries = 0
    for u in internal_ancestors(nodes, ell):
        query(oracle, sys, regs[2 * u] + regs[2 * u + 1] + regs[u], INVERSE)
        inverse_queries += 1
        outcome = sys.measure_computational(regs[u], rng)
        if outcome != "0" * layout.b:
            return DecommitResult(
                ok=False, failed_node=u, failed_outcome=outcome, inverse_queries=inverse_queries
            )
    return DecommitResult(
        ok=True,
        registers={u: list(regs[u]) for u in nodes},
        inverse_queries=inverse_queries,
    )
