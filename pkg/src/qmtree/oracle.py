"""The shared wide oracle and its inverse, under interchangeable backends.

A handle serves a fixed unitary G on lam = 3b qubits together with G^dagger,
counting queries per direction. Backends:

  haar            exact Haar-distributed dense unitary
  random_circuit  brickwork of independent Haar two-qubit gates
  oh              XOR of a random function table into the last b qubits
  identity        no-op (useful for accounting and as a null control)

The same seed and kind always reproduce the same oracle bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LabelError, ResourceLimitError, ValidationError
from .qstate import QuantumSystem

ORACLE_KINDS = ("haar", "random_circuit", "oh", "identity")

# Dense matrices are only materialized up to this arity (2^12 x 2^12).
DENSE_ORACLE_MAX_QUBITS = 12
# sample_haar_unitary refuses dimensions above this outright.
SAMPLE_DIM_CAP = 1 << 15
# Function tables are stored explicitly, so the input half is capped.
OH_MAX_BLOCK = 6

FORWARD = "forward"
INVERSE = "inverse"


def sample_haar_unitary(dim: int, rng: np.random.Generator, dim_cap: int = SAMPLE_DIM_CAP) -> np.ndarray:
    """Haar-distributed unitary via a Ginibre matrix, QR, and a phase fix.

    The raw QR factorization is not Haar-distributed; multiplying each column
    by the phase that makes the corresponding R diagonal entry positive real
    restores exact Haar distribution.
    """
    if dim < 1 or (dim & (dim - 1)) != 0:
        raise ValidationError(f"dimension must be a power of two, got {dim}")
    if dim > dim_cap:
        raise ResourceLimitError(f"dimension {dim} exceeds the dense sampling cap {dim_cap}")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def sample_haar_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random isometry: the first ``cols`` columns of a Haar unitary."""
    if cols > rows:
        raise ValidationError(f"isometry needs cols <= rows, got {rows}x{cols}")
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _brickwork_gates(lam: int, depth: int, rng: np.random.Generator) -> list[tuple[int, int, np.ndarray]]:
    """Alternating even/odd nearest-neighbor pairs, fresh Haar gate each slot."""
    gates = []
    for layer in range(depth):
        start = layer % 2
        for i in range(start, lam - 1, 2):
            gates.append((i, i + 1, sample_haar_unitary(4, rng)))
    return gates


def _compose_dense(gates: list[tuple[int, int, np.ndarray]], lam: int) -> np.ndarray:
    dim = 1 << lam
    op = np.eye(dim, dtype=complex).reshape((2,) * lam + (dim,))
    for i, j, u in gates:
        ut = u.reshape(2, 2, 2, 2)
        op = np.tensordot(ut, op, axes=((2, 3), (i, j)))
        op = np.moveaxis(op, (0, 1), (i, j))
    return op.reshape(dim, dim)


def parse_oracle_spec(spec: str) -> tuple[str, int | None]:
    """Parse a CLI-facing oracle name: haar | circuit:<depth> | oh | identity."""
    if spec in ("haar", "oh", "identity"):
        return spec, None
    if spec.startswith("circuit:"):
        try:
            depth = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ValidationError(f"bad circuit depth in oracle spec {spec!r}") from exc
        return "random_circuit", depth
    raise ValidationError(f"unknown oracle spec {spec!r} (want haar, circuit:<depth>, oh, identity)")


@dataclass
class OracleHandle:
    """One sampled oracle, shared by all parties of a single execution."""

    kind: str
    lam: int
    b: int
    seed: int
    depth: int | None = None
    matrix: np.ndarray | None = None
    gates: list[tuple[int, int, np.ndarray]] | None = None
    table: np.ndarray | None = None
    _perm: np.ndarray | None = None
    queries_G: int = 0
    queries_Ginv: int = 0
    log: list[tuple[str, tuple[int, ...]]] | None = field(default=None, repr=False)

    def snapshot(self) -> tuple[int, int]:
        return (self.queries_G, self.queries_Ginv)

    def total_queries(self) -> int:
        return self.queries_G + self.queries_Ginv

    def as_matrix(self) -> np.ndarray:
        """Dense representation; only available for lam <= 12."""
        if self.lam > DENSE_ORACLE_MAX_QUBITS:
            raise ResourceLimitError(
                f"dense form of a {self.lam}-qubit oracle exceeds the cap of {DENSE_ORACLE_MAX_QUBITS}"
            )
        if self.kind == "identity":
            return np.eye(1 << self.lam, dtype=complex)
        if self.kind == "haar":
            return self.matrix.copy()
        if self.kind == "oh":
            mat = np.zeros((1 << self.lam, 1 << self.lam), dtype=complex)
            mat[self._perm, np.arange(1 << self.lam)] = 1.0
            return mat
        return _compose_dense(self.gates, self.lam)

    def unitarity_defect(self) -> float:
        u = self.as_matrix()
        return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def build_oracle(kind: str, b: int, depth: int | None = None, seed: int = 0) -> OracleHandle:
    """Sample a fresh oracle of the given kind on lam = 3b qubits."""
    if kind not in ORACLE_KINDS:
        raise ValidationError(f"unknown oracle kind {kind!r}")
    if b < 1:
        raise ValidationError(f"block size must be positive, got {b}")
    lam = 3 * b
    rng = np.random.default_rng(seed)
    handle = OracleHandle(kind=kind, lam=lam, b=b, seed=int(seed), depth=depth)
    if kind == "haar":
        if lam > DENSE_ORACLE_MAX_QUBITS:
            raise ResourceLimitError(
                f"haar backend stores a dense matrix; lam={lam} exceeds {DENSE_ORACLE_MAX_QUBITS}"
            )
        handle.matrix = sample_haar_unitary(1 << lam, rng)
    elif kind == "random_circuit":
        if depth is None or depth < 1:
            raise ValidationError(f"random_circuit needs a positive depth, got {depth}")
        handle.gates = _brickwork_gates(lam, depth, rng)
    elif kind == "oh":
        if b > OH_MAX_BLOCK:
            raise ValidationError(f"oh backend stores 2^(2b) table entries; b={b} exceeds {OH_MAX_BLOCK}")
        handle.table = rng.integers(0, 1 << b, size=1 << (2 * b), dtype=np.int64)
        z = np.arange(1 << lam, dtype=np.int64)
        x = z >> b
        y = z & ((1 << b) - 1)
        handle._perm = (x << b) | (y ^ handle.table[x])
    elif kind == "identity" and depth is not None:
        raise ValidationError("identity oracle takes no depth")
    return handle


def query(handle: OracleHandle, sys: QuantumSystem, labels, direction: str = FORWARD) -> None:
    """Apply G (forward) or G^dagger (inverse) to exactly lam labels."""
    if direction not in (FORWARD, INVERSE):
        raise ValidationError(f"direction must be forward or inverse, got {direction!r}")
    if len(labels) != handle.lam:
        raise LabelError(f"oracle acts on {handle.lam} qubits, got {len(labels)} labels")
    inverse = direction == INVERSE
    if handle.kind == "identity":
        pass
    elif handle.kind == "haar":
        sys.apply_unitary(labels, handle.matrix, dagger=inverse, check_unitary=False)
    elif handle.kind == "oh":
        sys.apply_basis_permutation(labels, handle._perm, inverse=inverse)
    else:
        seq = reversed(handle.gates) if inverse else handle.gates
        for i, j, u in seq:
            sys.apply_unitary([labels[i], labels[j]], u, dagger=inverse, check_unitary=False)
    if inverse:
        handle.queries_Ginv += 1
    else:
        handle.queries_G += 1
    if handle.log is not None:
        handle.log.append((direction, tuple(labels)))


def _sample_dense(kind: str, lam: int, depth: int | None, rng: np.random.Generator) -> np.ndarray:
    if lam > DENSE_ORACLE_MAX_QUBITS:
        raise ResourceLimitError(f"dense sampling needs lam <= {DENSE_ORACLE_MAX_QUBITS}, got {lam}")
    dim = 1 << lam
    if kind == "haar":
        return sample_haar_unitary(dim, rng)
    if kind == "identity":
        return np.eye(dim, dtype=complex)
    if kind == "random_circuit":
        if depth is None or depth < 1:
            raise ValidationError(f"random_circuit needs a positive depth, got {depth}")
        return _compose_dense(_brickwork_gates(lam, depth, rng), lam)
    if kind == "oh":
        if lam % 3 != 0:
            raise ValidationError(f"oh backend needs lam divisible by 3, got {lam}")
        b = lam // 3
        table = rng.integers(0, 1 << b, size=1 << (2 * b), dtype=np.int64)
        z = np.arange(dim, dtype=np.int64)
        perm = ((z >> b) << b) | ((z & ((1 << b) - 1)) ^ table[z >> b])
        mat = np.zeros((dim, dim), dtype=complex)
        mat[perm, np.arange(dim)] = 1.0
        return mat
    raise ValidationError(f"unknown oracle kind {kind!r}")


def haar_statistics(
    kind: str,
    lam: int,
    depth: int | None = None,
    samples: int = 200,
    seed: int = 0,
    frame_potential: bool = False,
) -> dict:
    """Monte Carlo moments of an oracle ensemble, for comparing backends.

    Reports the sample mean and standard error of |U_00|^2 (the Haar value is
    1/2^lam), the worst unitarity defect seen, and optionally frame-potential
    estimates at t = 1 and t = 2 from disjoint sample pairs (Haar values 1
    and 2).
    """
    if samples < 100:
        raise ValidationError(f"need at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    dim = 1 << lam
    eye = np.eye(dim)
    vals = np.empty(samples)
    max_defect = 0.0
    fp1_sum = 0.0
    fp2_sum = 0.0
    pairs = 0
    prev: np.ndarray | None = None
    for s in range(samples):
        u = _sample_dense(kind, lam, depth, rng)
        vals[s] = abs(u[0, 0]) ** 2
        max_defect = max(max_defect, float(np.max(np.abs(u.conj().T @ u - eye))))
        if frame_potential:
            if prev is None:
                prev = u
            else:
                overlap = abs(np.trace(prev.conj().T @ u)) ** 2
                fp1_sum += overlap
                fp2_sum += overlap**2
                pairs += 1
                prev = None
    report = {
        "kind": kind,
        "lam": lam,
        "dim": dim,
        "depth": depth,
        "samples": samples,
        "mean_abs_u00_sq": float(vals.mean()),
        "stderr_abs_u00_sq": float(vals.std(ddof=1) / np.sqrt(samples)),
        "haar_moment": 1.0 / dim,
        "max_unitarity_defect": max_defect,
    }
    if frame_potential:
        report["frame_potential_t1"] = fp1_sum / pairs if pairs else float("nan")
        report["frame_potential_t2"] = fp2_sum / pairs if pairs else float("nan")
        report["frame_potential_pairs"] = pairs
    return report
