"""Concrete attacks on the depth-one commitment scheme.

Two families:

* The phase attack: after releasing the root register, apply a diagonal
  (-1)^f(z) unitary to the retained data qubits. Against the XOR-table
  backend the ancestor check still passes with certainty while the revealed
  state can be orthogonal to the committed one; against a generic dense
  oracle the same move fails the check most of the time.

* The purification-switch attack: an unbounded prover that knows the oracle
  matrix can steer the committed state toward a different target by acting
  only on its own qubits. The steering unitary maximizing the overlap is
  built from the SVD of the cross operator between the two commitments; the
  attained overlap is the nuclear norm of that operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import merkle
from .errors import ValidationError
from .oracle import OracleHandle, build_oracle, sample_haar_isometry
from .qstate import DensityMatrix, QuantumSystem, trace_distance

PROVER = "prover"
VERIFIER = "verifier"


@dataclass(frozen=True)
class PhaseFunction:
    """A Boolean function on 2b-bit strings, stored as a full bit table."""

    bits: np.ndarray

    def __post_init__(self):
        n = self.bits.size
        if n < 4 or (n & (n - 1)) != 0 or n.bit_length() % 2 == 0:
            # table length must be 2^(2b) = 4^b
            raise ValidationError(f"phase table length {n} is not 4^b for integer b")
        if not np.all((self.bits == 0) | (self.bits == 1)):
            raise ValidationError("phase table entries must be bits")

    @property
    def b(self) -> int:
        return (self.bits.size.bit_length() - 1) // 2

    @classmethod
    def zero(cls, b: int) -> "PhaseFunction":
        return cls(np.zeros(1 << (2 * b), dtype=np.uint8))

    @classmethod
    def parity(cls, b: int) -> "PhaseFunction":
        z = np.arange(1 << (2 * b))
        bits = np.array([bin(v).count("1") & 1 for v in z], dtype=np.uint8)
        return cls(bits)

    @classmethod
    def random(cls, b: int, rng: np.random.Generator) -> "PhaseFunction":
        return cls(rng.integers(0, 2, size=1 << (2 * b), dtype=np.uint8))

    def diagonal_unitary(self) -> np.ndarray:
        return np.diag((1.0 - 2.0 * self.bits.astype(float)).astype(complex))


@dataclass
class PhaseAttackOutcome:
    accepted: bool
    revealed_trace_distance: float | None
    fail_outcome: str | None
    oracle_seed: int


def phase_attack_round(
    b: int,
    oracle_kind: str,
    psi: np.ndarray,
    f: PhaseFunction,
    rng: np.random.Generator,
    depth: int | None = None,
) -> PhaseAttackOutcome:
    """One depth-one round with the phase cheat applied after the first message."""
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if psi.size != 1 << (2 * b):
        raise ValidationError(f"committed state must live on 2b = {2 * b} qubits")
    if f.b != b:
        raise ValidationError(f"phase table is for b = {f.b}, round uses b = {b}")
    oracle_seed = int(rng.integers(1 << 63))
    handle = build_oracle(oracle_kind, b, depth=depth, seed=oracle_seed)

    sys = QuantumSystem()
    data = sys.alloc_state(psi, PROVER)
    out = merkle.commit(sys, handle, data, b, owner=PROVER)
    layout = out.layout
    sys.transfer_ownership(layout.node_registers[1], PROVER, VERIFIER)

    sys.apply_unitary(data, f.diagonal_unitary(), check_unitary=False)

    for u in (2, 3):
        sys.transfer_ownership(layout.node_registers[u], PROVER, VERIFIER)
    dec = merkle.decommit(sys, handle, layout, {2, 3}, rng)
    if not dec.ok:
        return PhaseAttackOutcome(
            accepted=False,
            revealed_trace_distance=None,
            fail_outcome=dec.failed_outcome,
            oracle_seed=oracle_seed,
        )
    revealed = sys.reduced_density(data)
    committed = DensityMatrix(np.outer(psi, psi.conj()), 2 * b)
    return PhaseAttackOutcome(
        accepted=True,
        revealed_trace_distance=trace_distance(revealed, committed),
        fail_outcome=None,
        oracle_seed=oracle_seed,
    )


# -- purification switch ------------------------------------------------------


@dataclass
class SwitchResult:
    """The steering unitary and its exactly computable figures of merit."""

    W: np.ndarray
    predicted_overlap: float
    achieved_fidelity: float
    check_pass_probability: float


def _dense_oracle(G) -> np.ndarray:
    """Accept a dense matrix or a handle; reject anything non-unitary."""
    if isinstance(G, OracleHandle):
        mat = G.as_matrix()
    else:
        mat = np.asarray(G, dtype=complex)
        dim = mat.shape[0]
        if mat.ndim != 2 or mat.shape != (dim, dim) or dim < 2 or (dim & (dim - 1)) != 0:
            raise ValidationError(f"oracle matrix shape {mat.shape} is not a power-of-two square")
        defect = float(np.max(np.abs(mat.conj().T @ mat - np.eye(dim))))
        if defect > 1e-9:
            raise ValidationError(f"oracle matrix is not unitary (defect {defect:.3e})")
    return mat


def _switch_from_block(block: np.ndarray, psi: np.ndarray, phi: np.ndarray) -> SwitchResult:
    """Core computation from the oracle's action on the zero-ancilla subspace.

    ``block`` holds the 2^(2b) oracle columns whose last b input qubits are
    zero, i.e. the map data |-> oracle(data (x) zeros). Both commitments, the
    steering unitary, and the ancestor-check pass probability only involve
    these columns.
    """
    rows, cols = block.shape
    db = rows // cols
    a_vec = block @ psi
    b_vec = block @ phi
    a_mat = a_vec.reshape(cols, db)
    b_mat = b_vec.reshape(cols, db)
    cross = a_mat @ b_mat.conj().T
    u, s, vh = np.linalg.svd(cross)
    w = vh.conj().T @ u.conj().T
    steered = (w @ a_mat).reshape(-1)
    overlap = complex(np.vdot(b_vec, steered))
    back = block.conj().T @ steered
    return SwitchResult(
        W=w,
        predicted_overlap=float(np.sum(s)),
        achieved_fidelity=float(abs(overlap) ** 2),
        check_pass_probability=float(np.clip(np.vdot(back, back).real, 0.0, 1.0)),
    )


def hjw_switch_operator(G, psi: np.ndarray, phi: np.ndarray) -> SwitchResult:
    """Best data-side unitary steering a commitment of psi toward phi.

    The cross operator M between the two commitments satisfies
    <commit(phi)| (W (x) I) |commit(psi)> = Tr(W M); the SVD construction
    W = V U* attains the maximum |Tr(W M)|, the nuclear norm of M. The
    achieved fidelity is computed independently from explicit statevectors,
    so the reported identity with the squared nuclear norm is a real check.
    """
    mat = _dense_oracle(G)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if psi.shape != phi.shape:
        raise ValidationError("psi and phi must have equal dimension")
    if mat.shape[0] % psi.size != 0:
        raise ValidationError(
            f"oracle dimension {mat.shape[0]} is not a multiple of the data dimension {psi.size}"
        )
    db = mat.shape[0] // psi.size
    block = mat[:, ::db]
    return _switch_from_block(block, psi, phi)


def sample_haar_switch(
    b: int, psi: np.ndarray, phi: np.ndarray, rng: np.random.Generator
) -> SwitchResult:
    """Switch figures for a fresh Haar oracle, drawn only where it is used.

    The attack touches the oracle solely through its action on the
    zero-ancilla subspace, and the corresponding column block of a Haar
    unitary is exactly a Haar-random isometry, so sampling the isometry
    directly gives the same distribution at a fraction of the cost. This is
    what makes wide-block sweeps tractable.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if psi.size != 1 << (2 * b):
        raise ValidationError(f"data states must live on 2b = {2 * b} qubits")
    block = sample_haar_isometry(1 << (3 * b), 1 << (2 * b), rng)
    return _switch_from_block(block, psi, phi)


@dataclass
class HjwRoundOutcome:
    check_pass: bool
    conditional_fidelity: float | None
    analytic_check_pass: float


def hjw_attack_round(
    b: int, G, psi: np.ndarray, phi: np.ndarray, rng: np.random.Generator
) -> HjwRoundOutcome:
    """One sampled depth-one round of the switch attack on the engine."""
    mat = _dense_oracle(G)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if psi.size != 1 << (2 * b) or mat.shape[0] != 1 << (3 * b):
        raise ValidationError("dimension mismatch between b, the states, and the oracle")
    switch = hjw_switch_operator(mat, psi, phi)

    sys = QuantumSystem()
    data = sys.alloc_state(psi, PROVER)
    com = sys.alloc_register(b, "0" * b, PROVER)
    sys.apply_unitary(data + com, mat, check_unitary=False)
    sys.apply_unitary(data, switch.W, check_unitary=False)
    sys.transfer_ownership(data + com, PROVER, VERIFIER)
    sys.apply_unitary(data + com, mat, dagger=True, check_unitary=False)
    outcome = sys.measure_computational(com, rng)
    if outcome != "0" * b:
        return HjwRoundOutcome(
            check_pass=False,
            conditional_fidelity=None,
            analytic_check_pass=switch.check_pass_probability,
        )
    return HjwRoundOutcome(
        check_pass=True,
        conditional_fidelity=sys.pure_state_fidelity(data, phi),
        analytic_check_pass=switch.check_pass_probability,
    )


def random_orthogonal_pair(n_qubits: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two Haar-random mutually orthogonal pure states."""
    dim = 1 << n_qubits
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    psi /= np.linalg.norm(psi)
    phi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    phi -= psi * np.vdot(psi, phi)
    phi /= np.linalg.norm(phi)
    return psi, phi


def haar_switch_sweep(
    b_values,
    draws: int,
    seed: int,
    orthogonal: bool = True,
) -> dict[int, list[SwitchResult]]:
    """Per-block-size switch statistics over fresh Haar oracles."""
    results: dict[int, list[SwitchResult]] = {}
    for b in b_values:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(b)]))
        per_b = []
        for _ in range(draws):
            if orthogonal:
                psi, phi = random_orthogonal_pair(2 * b, rng)
            else:
                psi = rng.standard_normal(1 << (2 * b)) + 1j * rng.standard_normal(1 << (2 * b))
                psi /= np.linalg.norm(psi)
                phi = rng.standard_normal(1 << (2 * b)) + 1j * rng.standard_normal(1 << (2 * b))
                phi /= np.linalg.norm(phi)
            per_b.append(sample_haar_switch(b, psi, phi, rng))
        results[b] = per_b
    return results
