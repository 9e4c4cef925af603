"""Local Hamiltonian instances, exact ground states, and the term verifier.

An instance is a list of Hermitian terms with eigenvalues in [0, 1], each
acting on at most k named qubits, together with promise thresholds alpha and
beta: ground energy at most alpha*m means "yes", at least beta*m means "no".

The verifier side exposes two modes for checking a term against a state:
the default two-outcome measurement with accept effect I - H_i, and a
Clifford+T circuit acting on the term's qubits plus ancillas, where the
first ancilla is the output qubit.

Qubit indices in instances are 1-based. Index 1 is the most significant bit
of assembled dense operators, matching the statevector engine's convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ResourceLimitError, ValidationError
from .oracle import sample_haar_unitary
from .qstate import DensityMatrix, QuantumSystem

DENSE_QUBIT_CAP = 12
EIG_ATOL = 1e-9

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_T = np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex)
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

CLIFFORD_T_GATES: dict[str, tuple[np.ndarray, int]] = {
    "h": (_H, 1),
    "s": (_S, 1),
    "t": (_T, 1),
    "cnot": (_CNOT, 2),
}


@dataclass(frozen=True)
class HamiltonianTerm:
    qubits: tuple[int, ...]
    matrix: np.ndarray


@dataclass
class LocalHamiltonianInstance:
    n_qubits: int
    alpha: float
    beta: float
    k: int
    terms: list[HamiltonianTerm]
    label: str = "unknown"
    name: str | None = None

    @property
    def m(self) -> int:
        return len(self.terms)

    def validate(self) -> None:
        if self.n_qubits < 1:
            raise ValidationError(f"n_qubits must be positive, got {self.n_qubits}")
        if not 0 < self.alpha < self.beta <= 1:
            raise ValidationError(f"need 0 < alpha < beta <= 1, got alpha={self.alpha}, beta={self.beta}")
        if self.k < 1:
            raise ValidationError(f"locality k must be positive, got {self.k}")
        if self.label not in ("yes", "no", "unknown"):
            raise ValidationError(f"label must be yes/no/unknown, got {self.label!r}")
        if not self.terms:
            raise ValidationError("instance has no terms")
        for idx, term in enumerate(self.terms, start=1):
            qubits = term.qubits
            if len(set(qubits)) != len(qubits):
                raise ValidationError(f"term {idx}: duplicate qubits {qubits}")
            if len(qubits) > self.k:
                raise ValidationError(f"term {idx}: acts on {len(qubits)} qubits, k = {self.k}")
            for q in qubits:
                if not 1 <= q <= self.n_qubits:
                    raise ValidationError(f"term {idx}: qubit {q} out of range [1, {self.n_qubits}]")
            dim = 1 << len(qubits)
            if term.matrix.shape != (dim, dim):
                raise ValidationError(f"term {idx}: matrix shape {term.matrix.shape}, expected {dim}x{dim}")
            if np.max(np.abs(term.matrix - term.matrix.conj().T)) > EIG_ATOL:
                raise ValidationError(f"term {idx}: matrix is not Hermitian")
            vals = np.linalg.eigvalsh(term.matrix)
            if vals.min() < -EIG_ATOL or vals.max() > 1.0 + EIG_ATOL:
                raise ValidationError(
                    f"term {idx}: eigenvalues [{vals.min():.6g}, {vals.max():.6g}] outside [0, 1]"
                )


@dataclass
class VerifierTerm:
    """One sampled check: the term's qubits plus how to test them."""

    index: int
    qubits: tuple[int, ...]
    reject_effect: np.ndarray
    accept_effect: np.ndarray
    circuit: list[tuple] | None = None
    gamma: int = 0


# -- serialization ------------------------------------------------------------


def _matrix_to_json(mat: np.ndarray) -> list:
    return [[[float(c.real), float(c.imag)] for c in row] for row in mat]


def _matrix_from_json(rows, where: str) -> np.ndarray:
    try:
        return np.array([[complex(c[0], c[1]) for c in row] for row in rows], dtype=complex)
    except (TypeError, IndexError, ValueError) as exc:
        raise ValidationError(f"{where}: matrix entries must be [re, im] pairs") from exc


def instance_to_dict(inst: LocalHamiltonianInstance) -> dict:
    return {
        "n_qubits": inst.n_qubits,
        "alpha": inst.alpha,
        "beta": inst.beta,
        "k": inst.k,
        "terms": [
            {"qubits": list(t.qubits), "matrix": _matrix_to_json(t.matrix)} for t in inst.terms
        ],
        "label": inst.label,
    }


def instance_from_dict(doc: dict, name: str | None = None) -> LocalHamiltonianInstance:
    try:
        terms = [
            HamiltonianTerm(
                qubits=tuple(int(q) for q in entry["qubits"]),
                matrix=_matrix_from_json(entry["matrix"], f"term {i}"),
            )
            for i, entry in enumerate(doc["terms"], start=1)
        ]
        inst = LocalHamiltonianInstance(
            n_qubits=int(doc["n_qubits"]),
            alpha=float(doc["alpha"]),
            beta=float(doc["beta"]),
            k=int(doc["k"]),
            terms=terms,
            label=str(doc.get("label", "unknown")),
            name=name,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed instance document: {exc}") from exc
    inst.validate()
    return inst


def load_instance(text: str, name: str | None = None) -> LocalHamiltonianInstance:
    """Parse and validate an instance from its JSON text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"instance document is not valid JSON: {exc}") from exc
    return instance_from_dict(doc, name=name)


def load_instance_path(path: str | Path) -> LocalHamiltonianInstance:
    p = Path(path)
    return load_instance(p.read_text(), name=p.stem)


def save_instance(inst: LocalHamiltonianInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2, sort_keys=True) + "\n")


def bundled_instance_names() -> list[str]:
    pkg = resources.files("qmtree") / "instances"
    return sorted(p.name[: -len(".json")] for p in pkg.iterdir() if p.name.endswith(".json"))


def bundled_instance(name: str) -> LocalHamiltonianInstance:
    pkg = resources.files("qmtree") / "instances" / f"{name}.json"
    if not pkg.is_file():
        raise ValidationError(f"no bundled instance named {name!r}; have {bundled_instance_names()}")
    return load_instance(pkg.read_text(), name=name)


# -- dense spectral computations ----------------------------------------------


def _embed(mat: np.ndarray, qubits0: tuple[int, ...], n: int) -> np.ndarray:
    """Embed an operator on the (0-indexed, ordered) qubits into n qubits."""
    k = len(qubits0)
    rest = [q for q in range(n) if q not in qubits0]
    full = np.kron(mat, np.eye(1 << (n - k), dtype=complex))
    perm = list(qubits0) + rest
    inv = np.argsort(perm)
    tensor = full.reshape((2,) * (2 * n))
    return tensor.transpose(list(inv) + [n + int(a) for a in inv]).reshape(1 << n, 1 << n)


def assemble_dense(inst: LocalHamiltonianInstance) -> np.ndarray:
    """The full 2^N x 2^N sum of embedded terms."""
    if inst.n_qubits > DENSE_QUBIT_CAP:
        raise ResourceLimitError(f"dense assembly capped at {DENSE_QUBIT_CAP} qubits, got {inst.n_qubits}")
    total = np.zeros((1 << inst.n_qubits,) * 2, dtype=complex)
    for term in inst.terms:
        total += _embed(term.matrix, tuple(q - 1 for q in term.qubits), inst.n_qubits)
    return total


def power_iteration_ground_energy(
    inst: LocalHamiltonianInstance,
    shift: float = -0.05,
    tol: float = 1e-12,
    max_iter: int = 200_000,
    seed: int = 7,
) -> tuple[float, np.ndarray]:
    """Ground energy by inverse iteration on (H - shift*I), shift below spectrum."""
    h = assemble_dense(inst)
    dim = h.shape[0]
    lu = lu_factor(h - shift * np.eye(dim))
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    prev = None
    val = float("nan")
    for _ in range(max_iter):
        vec = lu_solve(lu, vec)
        vec /= np.linalg.norm(vec)
        val = float(np.real(vec.conj() @ (h @ vec)))
        if prev is not None and abs(val - prev) < tol:
            break
        prev = val
    return val, vec


def ground_energy(
    inst: LocalHamiltonianInstance, cross_check: bool = True
) -> tuple[float, np.ndarray]:
    """Minimum eigenvalue and a unit ground vector of the assembled operator.

    The dense eigensolver result is checked against inverse-shifted power
    iteration; disagreement beyond 1e-8 raises, since it signals a numerical
    problem rather than a modeling choice.
    """
    h = assemble_dense(inst)
    vals, vecs = np.linalg.eigh(h)
    lam_min = float(vals[0])
    vec = np.ascontiguousarray(vecs[:, 0])
    if cross_check:
        other, _ = power_iteration_ground_energy(inst)
        if abs(other - lam_min) > 1e-8:
            raise ValidationError(
                f"eigensolver cross-check failed: eigh {lam_min:.12g} vs power iteration {other:.12g}"
            )
    return lam_min, vec


def classify(inst: LocalHamiltonianInstance, lambda_min: float | None = None) -> str:
    """yes / no / outside_promise by comparing the ground energy to the thresholds."""
    if lambda_min is None:
        lambda_min, _ = ground_energy(inst)
    if lambda_min <= inst.alpha * inst.m:
        return "yes"
    if lambda_min >= inst.beta * inst.m:
        return "no"
    return "outside_promise"


# -- the verifier interface -----------------------------------------------------


def verifier_term(inst: LocalHamiltonianInstance, index: int) -> VerifierTerm:
    """The check for term ``index`` (1-based) in the default two-outcome mode."""
    if not 1 <= index <= inst.m:
        raise ValidationError(f"term index {index} out of range [1, {inst.m}]")
    term = inst.terms[index - 1]
    dim = 1 << len(term.qubits)
    return VerifierTerm(
        index=index,
        qubits=term.qubits,
        reject_effect=term.matrix.copy(),
        accept_effect=np.eye(dim, dtype=complex) - term.matrix,
    )


def sample_term(inst: LocalHamiltonianInstance, rng: np.random.Generator) -> VerifierTerm:
    """Uniformly draw a term index and return its check."""
    return verifier_term(inst, int(rng.integers(1, inst.m + 1)))


def accept_probability(inst: LocalHamiltonianInstance, index: int, rho) -> float:
    """1 - Tr(H_i rho) for the given term against a reduced state on its qubits."""
    if not 1 <= index <= inst.m:
        raise ValidationError(f"term index {index} out of range [1, {inst.m}]")
    mat = inst.terms[index - 1].matrix
    entries = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if entries.shape != mat.shape:
        raise ValidationError(f"state shape {entries.shape} does not match term shape {mat.shape}")
    return float(1.0 - np.real(np.trace(mat @ entries)))


def apply_verifier_circuit(
    sys: QuantumSystem,
    term: VerifierTerm,
    labels,
    rng: np.random.Generator,
    owner: str = "verifier",
) -> bool:
    """Run a Clifford+T check circuit on the term's qubits; accept iff the output ancilla reads 1.

    The circuit's wire indices are 0..k-1 for the payload qubits (in the
    term's qubit order) followed by ``gamma`` fresh |0> ancillas, of which
    the first is the output.
    """
    if term.circuit is None:
        raise ValidationError(f"term {term.index} carries no circuit")
    if term.gamma < 1:
        raise ValidationError("circuit mode needs at least the output ancilla")
    labels = list(labels)
    if len(labels) != len(term.qubits):
        raise ValidationError(f"expected {len(term.qubits)} payload labels, got {len(labels)}")
    ancillas = sys.alloc_register(term.gamma, "0" * term.gamma, owner)
    wires = labels + ancillas
    for gate in term.circuit:
        name, args = gate[0], gate[1:]
        if name not in CLIFFORD_T_GATES:
            raise ValidationError(f"gate {name!r} is outside the Clifford+T set {sorted(CLIFFORD_T_GATES)}")
        mat, arity = CLIFFORD_T_GATES[name]
        if len(args) != arity:
            raise ValidationError(f"gate {name!r} takes {arity} wires, got {len(args)}")
        for w in args:
            if not 0 <= w < len(wires):
                raise ValidationError(f"gate {name!r} wire {w} out of range [0, {len(wires) - 1}]")
        sys.apply_unitary([wires[w] for w in args], mat, check_unitary=False)
    return sys.measure_computational([ancillas[0]], rng) == "1"


# -- instance library -------------------------------------------------------------


def pinning_instance(n_qubits: int, alpha: float = 0.1, beta: float = 0.9) -> LocalHamiltonianInstance:
    """One |1><1| term per qubit; ground state |0...0| at energy zero."""
    proj1 = np.array([[0, 0], [0, 1]], dtype=complex)
    inst = LocalHamiltonianInstance(
        n_qubits=n_qubits,
        alpha=alpha,
        beta=beta,
        k=2,
        terms=[HamiltonianTerm((q,), proj1.copy()) for q in range(1, n_qubits + 1)],
        label="yes",
        name=f"pinning_{n_qubits}q",
    )
    inst.validate()
    return inst


def frustrated_instance(n_qubits: int, alpha: float = 0.1, beta: float = 0.9) -> LocalHamiltonianInstance:
    """|0><0| and |1><1| on every qubit; ground energy m/2 for every state."""
    proj0 = np.array([[1, 0], [0, 0]], dtype=complex)
    proj1 = np.array([[0, 0], [0, 1]], dtype=complex)
    terms = []
    for q in range(1, n_qubits + 1):
        terms.append(HamiltonianTerm((q,), proj0.copy()))
        terms.append(HamiltonianTerm((q,), proj1.copy()))
    inst = LocalHamiltonianInstance(
        n_qubits=n_qubits, alpha=alpha, beta=beta, k=2, terms=terms, label="no",
        name=f"frustrated_{n_qubits}q",
    )
    inst.validate()
    return inst


def calibrated_no_instance(
    n_qubits: int, level: float = 0.9, alpha: float = 0.1, beta: float = 0.9
) -> LocalHamiltonianInstance:
    """Per-qubit terms diag(level, 1); ground energy is exactly level * m."""
    mat = np.diag([level, 1.0]).astype(complex)
    inst = LocalHamiltonianInstance(
        n_qubits=n_qubits,
        alpha=alpha,
        beta=beta,
        k=2,
        terms=[HamiltonianTerm((q,), mat.copy()) for q in range(1, n_qubits + 1)],
        label="no",
        name=f"calibrated_no_{n_qubits}q",
    )
    inst.validate()
    return inst


def random_2local_instance(
    n_qubits: int,
    n_terms: int,
    seed: int,
    alpha: float = 0.1,
    beta: float = 0.9,
) -> LocalHamiltonianInstance:
    """Random projector terms on random qubit pairs, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(n_terms):
        pair = tuple(int(q) + 1 for q in rng.choice(n_qubits, size=2, replace=False))
        rank = int(rng.integers(1, 4))
        basis = sample_haar_unitary(4, rng)[:, :rank]
        terms.append(HamiltonianTerm(pair, basis @ basis.conj().T))
    inst = LocalHamiltonianInstance(
        n_qubits=n_qubits, alpha=alpha, beta=beta, k=2, terms=terms, label="unknown",
        name=f"random2local_{n_qubits}q_s{seed}",
    )
    inst.validate()
    return inst
