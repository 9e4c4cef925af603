"""Dense statevector engine over dynamically allocated, labeled qubits.

All parties of a protocol share one ``QuantumSystem``; "sending" a register
to another party only rewrites the owner map, so entanglement between
registers held by different parties is represented exactly.

Internally the global state is stored as a product of independent dense
factors that are merged lazily whenever a gate or measurement couples them.
Registers that never interact therefore never inflate the cost of the
entangled part, and measured qubits are split back out into single-qubit
basis factors. Callers see a single global state: every operation behaves
exactly as it would on one monolithic statevector, and ``amplitudes``
materializes that vector for small systems.

Conventions: a label's position in the global allocation order (and in any
``labels`` argument) is its bit position, most significant bit first. Bit
strings returned by measurements follow the order of the labels passed in.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LabelError, ProtocolViolationError, ResourceLimitError, ValidationError

DEFAULT_QUBIT_CAP = 20
QUBIT_CAP_ENV_VAR = "QMT_MAX_QUBITS"

# Largest system for which the full amplitude vector may be materialized
# (256 MiB of complex128); factored operation itself is not bounded by this.
MATERIALIZE_MAX_QUBITS = 24

ATOL = 1e-9


def default_qubit_cap() -> int:
    """Hard cap on allocated qubits; overridable via QMT_MAX_QUBITS."""
    raw = os.environ.get(QUBIT_CAP_ENV_VAR)
    if raw is None:
        return DEFAULT_QUBIT_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{QUBIT_CAP_ENV_VAR} must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValidationError(f"{QUBIT_CAP_ENV_VAR} must be positive, got {cap}")
    return cap


def random_state(n_qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state on ``n_qubits`` qubits."""
    dim = 1 << n_qubits
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state |bits> as a dense vector."""
    if not bits or any(c not in "01" for c in bits):
        raise ValidationError(f"basis string must be nonempty over {{0,1}}, got {bits!r}")
    vec = np.zeros(1 << len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return vec


def _as_density(obj) -> np.ndarray:
    if isinstance(obj, DensityMatrix):
        return obj.entries
    arr = np.asarray(obj, dtype=complex)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return arr


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


@dataclass(frozen=True)
class DensityMatrix:
    """Reduced state on ``qubit_count`` qubits as a dense matrix."""

    entries: np.ndarray
    qubit_count: int

    def validate(self, atol: float = ATOL) -> None:
        dim = 1 << self.qubit_count
        if self.entries.shape != (dim, dim):
            raise ValidationError(
                f"density matrix shape {self.entries.shape} does not match {self.qubit_count} qubits"
            )
        if np.max(np.abs(self.entries - self.entries.conj().T)) > atol:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(self.entries).real - 1.0) > atol or abs(np.trace(self.entries).imag) > atol:
            raise ValidationError("density matrix trace is not 1")
        if np.min(np.linalg.eigvalsh(self.entries)) < -atol:
            raise ValidationError("density matrix has a negative eigenvalue")

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, clamped to [0, 1]."""
    a = _as_density(rho)
    b = _as_density(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    root = _psd_sqrt(a)
    inner = root @ b @ root
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    return float(np.clip(np.sum(np.sqrt(vals)) ** 2, 0.0, 1.0))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of (rho - sigma), so the range is [0, 1]."""
    a = _as_density(rho)
    b = _as_density(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    vals = np.linalg.eigvalsh(a - b)
    return float(np.clip(0.5 * np.sum(np.abs(vals)), 0.0, 1.0))


def _tensor_apply(amps: np.ndarray, mat: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    """Apply a 2^t x 2^t matrix to the tensor axes named in ``positions``."""
    t = len(positions)
    mt = np.asarray(mat, dtype=complex).reshape((2,) * (2 * t))
    out = np.tensordot(mt, amps, axes=(tuple(range(t, 2 * t)), tuple(positions)))
    return np.moveaxis(out, range(t), positions)


class _Factor:
    """One unentangled tensor factor of the global state."""

    __slots__ = ("labels", "amps")

    def __init__(self, labels: list[int], amps: np.ndarray):
        self.labels = labels
        self.amps = amps


class QuantumSystem:
    """A global pure state over labeled qubits with per-label ownership."""

    def __init__(self, qubit_cap: int | None = None):
        self.qubit_cap = default_qubit_cap() if qubit_cap is None else int(qubit_cap)
        if self.qubit_cap < 1:
            raise ValidationError(f"qubit cap must be positive, got {self.qubit_cap}")
        self._factors: list[_Factor] = []
        self._where: dict[int, _Factor] = {}
        self._owner: dict[int, str] = {}
        self._order: list[int] = []
        self._next_label = 0
        self._global_phase = complex(1.0)

    # -- bookkeeping -------------------------------------------------------

    @property
    def num_qubits(self) -> int:
        return len(self._order)

    @property
    def qubit_labels(self) -> tuple[int, ...]:
        """All live labels in allocation order."""
        return tuple(self._order)

    def owner_of(self, label: int) -> str:
        self._check_labels([label])
        return self._owner[label]

    def labels_of(self, owner: str) -> tuple[int, ...]:
        return tuple(lab for lab in self._order if self._owner[lab] == owner)

    def _check_labels(self, labels: Sequence[int], arity: int | None = None) -> None:
        if arity is not None and len(labels) != arity:
            raise LabelError(f"expected {arity} labels, got {len(labels)}")
        if len(labels) == 0:
            raise LabelError("empty label list")
        if len(set(labels)) != len(labels):
            raise LabelError(f"duplicate labels in {labels}")
        for lab in labels:
            if lab not in self._where:
                raise LabelError(f"label {lab} is not live")

    def norm_error(self) -> float:
        """|  ||psi||^2 - 1 |, computed across all factors."""
        total = 1.0
        for f in self._factors:
            total *= float(np.vdot(f.amps, f.amps).real)
        return abs(total - 1.0)

    def _assert_norm(self) -> None:
        err = self.norm_error()
        if err > ATOL:
            raise ValidationError(f"statevector norm drifted by {err:.3e}")

    # -- allocation --------------------------------------------------------

    def _grow_guard(self, count: int) -> None:
        if count < 1:
            raise ValidationError(f"allocation count must be positive, got {count}")
        if self.num_qubits + count > self.qubit_cap:
            raise ResourceLimitError(
                f"allocating {count} qubits would exceed the cap of {self.qubit_cap} "
                f"({self.num_qubits} already live)"
            )

    def _new_labels(self, count: int, owner: str) -> list[int]:
        labels = list(range(self._next_label, self._next_label + count))
        self._next_label += count
        self._order.extend(labels)
        for lab in labels:
            self._owner[lab] = owner
        return labels

    def alloc_register(self, count: int, basis_init: str, owner: str) -> list[int]:
        """Allocate ``count`` fresh qubits in the basis state |basis_init>."""
        self._grow_guard(count)
        if len(basis_init) != count or any(c not in "01" for c in basis_init):
            raise ValidationError(f"basis_init {basis_init!r} is not a bit string of length {count}")
        labels = self._new_labels(count, owner)
        for lab, bit in zip(labels, basis_init):
            amps = np.zeros(2, dtype=complex)
            amps[int(bit)] = 1.0
            f = _Factor([lab], amps)
            self._factors.append(f)
            self._where[lab] = f
        return labels

    def alloc_state(self, state: np.ndarray, owner: str) -> list[int]:
        """Allocate fresh qubits holding an arbitrary unit vector."""
        vec = np.asarray(state, dtype=complex).reshape(-1)
        count = int(np.log2(vec.size))
        if 1 << count != vec.size:
            raise ValidationError(f"state length {vec.size} is not a power of two")
        if abs(np.vdot(vec, vec).real - 1.0) > ATOL:
            raise ValidationError("state vector is not unit norm")
        self._grow_guard(count)
        labels = self._new_labels(count, owner)
        f = _Factor(list(labels), vec.copy().reshape((2,) * count))
        self._factors.append(f)
        for lab in labels:
            self._where[lab] = f
        return labels

    # -- factor maintenance --------------------------------------------------

    def _merge(self, labels: Sequence[int]) -> _Factor:
        involved: list[_Factor] = []
        seen: set[int] = set()
        for lab in labels:
            f = self._where[lab]
            if id(f) not in seen:
                involved.append(f)
                seen.add(id(f))
        if len(involved) == 1:
            return involved[0]
        merged_labels = []
        amps = np.array(1.0, dtype=complex)
        for f in involved:
            amps = np.tensordot(amps, f.amps, axes=0)
            merged_labels.extend(f.labels)
        merged = _Factor(merged_labels, amps)
        first = self._factors.index(involved[0])
        self._factors[first] = merged
        for f in involved[1:]:
            self._factors.remove(f)
        for lab in merged_labels:
            self._where[lab] = merged
        return merged

    def _positions(self, factor: _Factor, labels: Sequence[int]) -> list[int]:
        return [factor.labels.index(lab) for lab in labels]

    # -- unitary dynamics ----------------------------------------------------

    def apply_unitary(
        self,
        labels: Sequence[int],
        matrix: np.ndarray,
        dagger: bool = False,
        check_unitary: bool = True,
    ) -> None:
        """Apply a unitary (or its adjoint) to the named qubits, in label order."""
        self._check_labels(labels)
        t = len(labels)
        mat = np.asarray(matrix, dtype=complex)
        if mat.shape != (1 << t, 1 << t):
            raise ValidationError(f"matrix shape {mat.shape} does not act on {t} qubits")
        if check_unitary:
            defect = np.max(np.abs(mat.conj().T @ mat - np.eye(1 << t)))
            if defect > ATOL:
                raise ValidationError(f"matrix is not unitary (defect {defect:.3e})")
        if dagger:
            mat = mat.conj().T
        f = self._merge(labels)
        f.amps = _tensor_apply(f.amps, mat, self._positions(f, labels))
        self._assert_norm()

    def apply_basis_permutation(self, labels: Sequence[int], perm: np.ndarray, inverse: bool = False) -> None:
        """Apply a permutation of computational basis states of the named qubits."""
        self._check_labels(labels)
        t = len(labels)
        perm = np.asarray(perm)
        if perm.shape != (1 << t,) or np.any(np.sort(perm) != np.arange(1 << t)):
            raise ValidationError(f"not a permutation of {1 << t} basis states")
        f = self._merge(labels)
        pos = self._positions(f, labels)
        q = len(f.labels)
        rest = [i for i in range(q) if i not in pos]
        moved = np.transpose(f.amps, pos + rest).reshape(1 << t, -1)
        if inverse:
            out = moved[perm]
        else:
            out = np.empty_like(moved)
            out[perm] = moved
        out = out.reshape([2] * t + [2] * len(rest))
        f.amps = np.transpose(out, np.argsort(pos + rest))
        self._assert_norm()

    # -- measurement ---------------------------------------------------------

    def _replace_factor(self, old: _Factor, replacements: list[_Factor]) -> None:
        idx = self._factors.index(old)
        self._factors[idx : idx + 1] = replacements
        for f in replacements:
            for lab in f.labels:
                self._where[lab] = f

    def measure_computational(self, labels: Sequence[int], rng: np.random.Generator) -> str:
        """Projectively measure the named qubits; returns the outcome bits."""
        self._check_labels(labels)
        f = self._merge(labels)
        pos = self._positions(f, labels)
        q = len(f.labels)
        rest = [i for i in range(q) if i not in pos]
        probs = np.abs(f.amps) ** 2
        if rest:
            probs = probs.sum(axis=tuple(rest))
        kept_sorted = sorted(pos)
        probs = np.transpose(probs, [kept_sorted.index(p) for p in pos]).reshape(-1)
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        outcome = int(rng.choice(probs.size, p=probs))
        bits = format(outcome, f"0{len(labels)}b")

        slicer: list = [slice(None)] * q
        for bit, p in zip(bits, pos):
            slicer[p] = int(bit)
        remainder = np.asarray(f.amps[tuple(slicer)])
        norm = np.linalg.norm(remainder.reshape(-1))
        replacements: list[_Factor] = []
        if remainder.size > 1:
            rest_labels = [lab for i, lab in enumerate(f.labels) if i not in pos]
            replacements.append(_Factor(rest_labels, remainder / norm))
        else:
            # fully measured factor: keep its residual phase globally
            self._global_phase *= complex(remainder.reshape(())) / norm
        for lab, bit in zip(labels, bits):
            amps = np.zeros(2, dtype=complex)
            amps[int(bit)] = 1.0
            replacements.append(_Factor([lab], amps))
        self._replace_factor(f, replacements)
        self._assert_norm()
        return bits

    def measure_povm_accept(
        self, labels: Sequence[int], effect: np.ndarray, rng: np.random.Generator
    ) -> bool:
        """Two-outcome measurement {effect, 1 - effect} on the named qubits.

        Returns False (reject) with probability Tr(effect * rho); the state
        collapses by the square-root instrument of the realized outcome.
        """
        self._check_labels(labels)
        t = len(labels)
        e = np.asarray(effect, dtype=complex)
        if e.shape != (1 << t, 1 << t):
            raise ValidationError(f"effect shape {e.shape} does not act on {t} qubits")
        if np.max(np.abs(e - e.conj().T)) > ATOL:
            raise ValidationError("effect is not Hermitian")
        vals = np.linalg.eigvalsh(e)
        if vals.min() < -ATOL or vals.max() > 1.0 + ATOL:
            raise ValidationError(f"effect eigenvalues [{vals.min():.3e}, {vals.max():.3e}] out of [0, 1]")
        e = 0.5 * (e + e.conj().T)

        f = self._merge(labels)
        pos = self._positions(f, labels)
        branch = _tensor_apply(f.amps, _psd_sqrt(e), pos)
        p_reject = float(np.clip(np.vdot(branch, branch).real, 0.0, 1.0))
        reject = bool(rng.random() < p_reject)
        if reject:
            f.amps = branch / np.sqrt(p_reject)
        else:
            other = _tensor_apply(f.amps, _psd_sqrt(np.eye(1 << t) - e), pos)
            f.amps = other / np.linalg.norm(other.reshape(-1))
        self._assert_norm()
        return not reject

    # -- diagnostics -----------------------------------------------------------

    def reduced_density(self, labels: Sequence[int]) -> DensityMatrix:
        """Partial trace onto the named qubits, in the given order."""
        self._check_labels(labels)
        wanted = set(labels)
        pieces: list[tuple[list[int], np.ndarray]] = []
        seen: set[int] = set()
        for lab in labels:
            f = self._where[lab]
            if id(f) in seen:
                continue
            seen.add(id(f))
            kept = [x for x in labels if x in f.labels and x in wanted]
            pos = self._positions(f, kept)
            rest = [i for i in range(len(f.labels)) if i not in pos]
            moved = np.transpose(f.amps, pos + rest).reshape(1 << len(kept), -1)
            pieces.append((kept, moved @ moved.conj().T))
        order: list[int] = []
        rho = np.array([[1.0]], dtype=complex)
        for kept, mat in pieces:
            rho = np.kron(rho, mat)
            order.extend(kept)
        r = len(labels)
        perm = [order.index(lab) for lab in labels]
        rho = rho.reshape((2,) * (2 * r))
        rho = np.transpose(rho, perm + [r + p for p in perm])
        return DensityMatrix(rho.reshape(1 << r, 1 << r), r)

    def pure_state_fidelity(self, labels: Sequence[int], target: np.ndarray) -> float:
        """<target| rho_labels |target> for a pure target vector."""
        vec = np.asarray(target, dtype=complex).reshape(-1)
        rho = self.reduced_density(labels).entries
        if rho.shape[0] != vec.size:
            raise ValidationError(f"target dimension {vec.size} does not match {rho.shape[0]}")
        return float(np.clip(np.real(vec.conj() @ rho @ vec), 0.0, 1.0))

    @property
    def amplitudes(self) -> np.ndarray:
        """Full state vector in allocation order (small systems only)."""
        q = self.num_qubits
        if q == 0:
            return np.array([self._global_phase], dtype=complex)
        if q > MATERIALIZE_MAX_QUBITS:
            raise ResourceLimitError(
                f"refusing to materialize 2^{q} amplitudes (limit 2^{MATERIALIZE_MAX_QUBITS})"
            )
        acc = np.array(self._global_phase, dtype=complex)
        labs: list[int] = []
        for f in self._factors:
            acc = np.tensordot(acc, f.amps, axes=0)
            labs.extend(f.labels)
        perm = [labs.index(lab) for lab in self._order]
        return np.transpose(acc, perm).reshape(-1)

    # -- ownership --------------------------------------------------------------

    def transfer_ownership(self, labels: Sequence[int], sender: str, recipient: str) -> None:
        """Reassign registers between parties; the quantum state is untouched."""
        self._check_labels(labels)
        for lab in labels:
            if self._owner[lab] != sender:
                raise ProtocolViolationError(
                    f"label {lab} is owned by {self._owner[lab]!r}, not by sender {sender!r}"
                )
        for lab in labels:
            self._owner[lab] = recipient
