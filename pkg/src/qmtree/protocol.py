"""The three-message succinct argument and its experiment drivers.

One round: the prover commits its witness through the tree and sends the
root register; the verifier draws a term index and sends it back; the prover
sends the register frontier of the term's leaves; the verifier decommits and,
if every ancestor check passes, measures the term's accept effect (or runs
its check circuit) on the revealed qubits.

Prover strategies: honest (commits the exact ground state, aborts unless the
instance is labeled yes), semi-honest (commits an arbitrary supplied state
but otherwise follows the protocol), and adversary (semi-honest plus mutable
hooks fired before the first and third messages).

All parties share one QuantumSystem and one OracleHandle per round; query
attribution is by counter snapshots around each party's turn.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import merkle
from .errors import ProtocolViolationError, ValidationError
from .hamiltonian import LocalHamiltonianInstance, VerifierTerm, ground_energy, verifier_term
from .oracle import OracleHandle, build_oracle
from .qstate import QuantumSystem, basis_state
from .seeds import ORACLE_STREAM, STRATEGY_STREAM, VERIFIER_STREAM, child_rng, child_seed

PROVER = "prover"
VERIFIER = "verifier"


@dataclass(frozen=True)
class QueryCounts:
    prover_g: int = 0
    prover_ginv: int = 0
    verifier_g: int = 0
    verifier_ginv: int = 0


@dataclass
class Transcript:
    """Everything observable about one protocol round."""

    oracle_kind: str
    oracle_seed: int
    b: int
    ell: int
    trial: int = 0
    chosen_i: int | None = None
    message1_labels: tuple[int, ...] = ()
    message3_labels: tuple[int, ...] = ()
    decommit_pass: bool = False
    fail_node: int | None = None
    fail_outcome: str | None = None
    final_accept: bool | None = None
    accepted: bool = False
    aborted: bool = False
    violation: str | None = None
    queries: QueryCounts = field(default_factory=QueryCounts)
    qubits_sent: int = 0
    classical_bits_sent: int = 0

    def csv_row(self) -> dict:
        return {
            "seed": self.oracle_seed,
            "trial": self.trial,
            "i": self.chosen_i,
            "decommit_pass": self.decommit_pass,
            "fail_node": self.fail_node,
            "accepted": self.accepted,
            "qubits_sent": self.qubits_sent,
            "prover_G": self.queries.prover_g,
            "prover_Ginv": self.queries.prover_ginv,
            "verifier_Ginv": self.queries.verifier_ginv,
        }


TRANSCRIPT_COLUMNS = [
    "seed", "trial", "i", "decommit_pass", "fail_node", "accepted",
    "qubits_sent", "prover_G", "prover_Ginv", "verifier_Ginv",
]


@dataclass
class AdversaryContext:
    """Mutable view handed to adversary hooks."""

    sys: QuantumSystem
    oracle: OracleHandle
    layout: merkle.MerkleLayout
    instance: LocalHamiltonianInstance
    rng: np.random.Generator
    chosen_i: int | None = None

    def prover_labels(self) -> tuple[int, ...]:
        return self.sys.labels_of(PROVER)


Hook = Callable[[AdversaryContext], None]


@dataclass
class ProverStrategy:
    kind: str  # honest | semi_honest | adversary
    sigma: np.ndarray | None
    name: str
    before_message1: Hook | None = None
    before_message3: Hook | None = None


def honest_strategy(instance: LocalHamiltonianInstance) -> ProverStrategy:
    """Commits the exact ground state; aborts unless the instance is labeled yes."""
    sigma = None
    if instance.label == "yes":
        _, sigma = ground_energy(instance)
    return ProverStrategy(kind="honest", sigma=sigma, name="honest")


def semi_honest_state(sigma: np.ndarray, name: str = "semi-honest") -> ProverStrategy:
    return ProverStrategy(kind="semi_honest", sigma=np.asarray(sigma, dtype=complex), name=name)


def semi_honest_ground(instance: LocalHamiltonianInstance) -> ProverStrategy:
    """Commits the ground state regardless of the instance label (the best cheat)."""
    _, sigma = ground_energy(instance)
    return semi_honest_state(sigma, name="semi-honest-ground")


def semi_honest_zero(instance: LocalHamiltonianInstance) -> ProverStrategy:
    return semi_honest_state(basis_state("0" * instance.n_qubits), name="semi-honest-zero")


def adversary_strategy(
    sigma: np.ndarray,
    before_message1: Hook | None = None,
    before_message3: Hook | None = None,
    name: str = "adversary",
) -> ProverStrategy:
    return ProverStrategy(
        kind="adversary",
        sigma=np.asarray(sigma, dtype=complex),
        name=name,
        before_message1=before_message1,
        before_message3=before_message3,
    )


STRATEGY_FACTORIES = {
    "honest": honest_strategy,
    "semi-honest-ground": semi_honest_ground,
    "semi-honest-zero": semi_honest_zero,
}


def make_strategy(name: str, instance: LocalHamiltonianInstance) -> ProverStrategy:
    if name not in STRATEGY_FACTORIES:
        raise ValidationError(f"unknown strategy {name!r}; have {sorted(STRATEGY_FACTORIES)}")
    return STRATEGY_FACTORIES[name](instance)


@dataclass
class RoundState:
    """Internal artifacts of one round, for tests and diagnostics."""

    sys: QuantumSystem | None = None
    layout: merkle.MerkleLayout | None = None
    term: VerifierTerm | None = None
    frontier: set[int] | None = None
    decommit: merkle.DecommitResult | None = None


def _tree_shape(instance: LocalHamiltonianInstance, oracle: OracleHandle) -> tuple[int, int]:
    b = oracle.b
    n = instance.n_qubits
    if n % b != 0:
        raise ValidationError(f"instance on {n} qubits does not split into {b}-qubit blocks")
    ell = n // b
    if ell < 1 or (ell & (ell - 1)) != 0:
        raise ValidationError(f"leaf count {ell} is not a power of two; pad the instance")
    return b, ell


def execute_round(
    instance: LocalHamiltonianInstance,
    oracle: OracleHandle,
    strategy: ProverStrategy,
    verifier_rng: np.random.Generator,
    strategy_rng: np.random.Generator | None = None,
    qubit_cap: int | None = None,
    trial: int = 0,
    circuit_provider: Callable[[int], tuple[list[tuple], int]] | None = None,
) -> tuple[Transcript, RoundState]:
    """Run one round and return the transcript plus internal artifacts."""
    b, ell = _tree_shape(instance, oracle)
    transcript = Transcript(
        oracle_kind=oracle.kind, oracle_seed=oracle.seed, b=b, ell=ell, trial=trial
    )
    state = RoundState()
    if strategy.kind == "honest" and instance.label != "yes":
        transcript.aborted = True
        return transcript, state
    if strategy.sigma is None:
        raise ValidationError(f"strategy {strategy.name!r} has no state to commit")
    if strategy.sigma.size != 1 << instance.n_qubits:
        raise ValidationError(
            f"committed state has {strategy.sigma.size} amplitudes, expected 2^{instance.n_qubits}"
        )

    sys = QuantumSystem(qubit_cap=qubit_cap)
    state.sys = sys
    hook_rng = strategy_rng if strategy_rng is not None else verifier_rng
    ctx = AdversaryContext(sys=sys, oracle=oracle, layout=None, instance=instance, rng=hook_rng)

    # prover turn: commit, then release the root
    g0, ginv0 = oracle.snapshot()
    payload = sys.alloc_state(strategy.sigma, PROVER)
    out = merkle.commit(sys, oracle, payload, b, owner=PROVER)
    layout = out.layout
    state.layout = layout
    ctx.layout = layout
    if strategy.before_message1 is not None:
        strategy.before_message1(ctx)
    prover_g, prover_ginv = oracle.queries_G - g0, oracle.queries_Ginv - ginv0

    root_regs = layout.node_registers[out.root_node]
    sys.transfer_ownership(root_regs, PROVER, VERIFIER)
    transcript.message1_labels = tuple(root_regs)
    received = {out.root_node: list(root_regs)}

    # verifier turn: draw a term
    i = int(verifier_rng.integers(1, instance.m + 1))
    transcript.chosen_i = i
    transcript.classical_bits_sent = math.ceil(math.log2(instance.m)) if instance.m > 1 else 0
    term = verifier_term(instance, i)
    if circuit_provider is not None:
        gates, gamma = circuit_provider(i)
        term.circuit = gates
        term.gamma = gamma
    state.term = term
    ctx.chosen_i = i
    leaves = merkle.leaves_W(term.qubits, b, ell)
    frontier = merkle.frontier_R(leaves, ell)
    state.frontier = frontier

    # prover turn: send the frontier (all but the root, already sent)
    if strategy.before_message3 is not None:
        strategy.before_message3(ctx)
    message3: list[int] = []
    try:
        for u in sorted(frontier - {out.root_node}):
            regs = layout.node_registers[u]
            sys.transfer_ownership(regs, PROVER, VERIFIER)
            received[u] = list(regs)
            message3.extend(regs)
    except ProtocolViolationError as exc:
        transcript.violation = str(exc)
        transcript.qubits_sent = b + len(message3)
        return transcript, state
    transcript.message3_labels = tuple(message3)
    transcript.qubits_sent = b + len(message3)

    # verifier turn: decommit, then check the term
    v_g0, v_ginv0 = oracle.snapshot()
    view = merkle.MerkleLayout(b=b, ell=ell, node_registers=received)
    dec = merkle.decommit(sys, oracle, view, leaves, verifier_rng)
    state.decommit = dec
    transcript.decommit_pass = dec.ok
    if not dec.ok:
        transcript.fail_node = dec.failed_node
        transcript.fail_outcome = dec.failed_outcome
    else:
        check_labels = []
        for s in term.qubits:
            leaf, offset = merkle.leaf_position(s, b, ell)
            check_labels.append(dec.registers[leaf][offset])
        if term.circuit is not None:
            from .hamiltonian import apply_verifier_circuit

            accept = apply_verifier_circuit(sys, term, check_labels, verifier_rng, owner=VERIFIER)
        else:
            accept = sys.measure_povm_accept(check_labels, term.reject_effect, verifier_rng)
        transcript.final_accept = accept
    verifier_g = oracle.queries_G - v_g0
    verifier_ginv = oracle.queries_Ginv - v_ginv0
    assert verifier_g == 0, "the verifier only ever queries the inverse direction"

    transcript.queries = QueryCounts(
        prover_g=prover_g,
        prover_ginv=prover_ginv,
        verifier_g=verifier_g,
        verifier_ginv=verifier_ginv,
    )
    transcript.accepted = bool(transcript.decommit_pass and transcript.final_accept)
    return transcript, state


def run_round(
    instance: LocalHamiltonianInstance,
    oracle: OracleHandle,
    strategy: ProverStrategy,
    verifier_rng: np.random.Generator,
    strategy_rng: np.random.Generator | None = None,
    qubit_cap: int | None = None,
    trial: int = 0,
) -> Transcript:
    transcript, _ = execute_round(
        instance, oracle, strategy, verifier_rng, strategy_rng, qubit_cap, trial
    )
    return transcript


@dataclass
class EstimateResult:
    rate: float
    stderr: float
    trials: int
    mean_queries: dict[str, float]
    mean_qubits_sent: float
    transcripts: list[Transcript]


def _run_trial(args) -> Transcript:
    instance, oracle_kind, depth, b, strategy, master_seed, trial, qubit_cap = args
    oracle_seed = child_seed(master_seed, trial, ORACLE_STREAM)
    handle = build_oracle(oracle_kind, b, depth=depth, seed=oracle_seed)
    verifier_rng = child_rng(master_seed, trial, VERIFIER_STREAM)
    strategy_rng = child_rng(master_seed, trial, STRATEGY_STREAM)
    return run_round(
        instance, handle, strategy, verifier_rng, strategy_rng, qubit_cap=qubit_cap, trial=trial
    )


def estimate_acceptance(
    instance: LocalHamiltonianInstance,
    oracle_kind: str,
    strategy: ProverStrategy,
    trials: int,
    seed: int,
    *,
    b: int,
    depth: int | None = None,
    qubit_cap: int | None = None,
    workers: int = 1,
) -> EstimateResult:
    """Monte Carlo acceptance over fresh oracle draws, one oracle per trial."""
    if trials < 1:
        raise ValidationError(f"need at least one trial, got {trials}")
    args = [
        (instance, oracle_kind, depth, b, strategy, seed, t, qubit_cap) for t in range(trials)
    ]
    if workers > 1:
        if strategy.before_message1 is not None or strategy.before_message3 is not None:
            raise ValidationError("strategies with hooks cannot be dispatched to worker processes")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            transcripts = list(pool.map(_run_trial, args, chunksize=16))
    else:
        transcripts = [_run_trial(a) for a in args]
    accepted = sum(1 for t in transcripts if t.accepted)
    rate = accepted / trials
    stderr = math.sqrt(rate * (1.0 - rate) / trials)
    mean_queries = {
        "prover_G": float(np.mean([t.queries.prover_g for t in transcripts])),
        "prover_Ginv": float(np.mean([t.queries.prover_ginv for t in transcripts])),
        "verifier_G": float(np.mean([t.queries.verifier_g for t in transcripts])),
        "verifier_Ginv": float(np.mean([t.queries.verifier_ginv for t in transcripts])),
    }
    return EstimateResult(
        rate=rate,
        stderr=stderr,
        trials=trials,
        mean_queries=mean_queries,
        mean_qubits_sent=float(np.mean([t.qubits_sent for t in transcripts])),
        transcripts=transcripts,
    )


@dataclass
class RepeatResult:
    accepted: bool
    accept_count: int
    repetitions: int
    threshold: float
    oracle_mode: str
    per_round: list[bool]
    transcripts: list[Transcript]


def acceptance_threshold(instance: LocalHamiltonianInstance) -> float:
    """Midpoint decision threshold separating rates 1 - alpha and 1 - beta."""
    return 1.0 - (instance.alpha + instance.beta) / 2.0


def sequential_repeat(
    instance: LocalHamiltonianInstance,
    oracle_kind: str,
    strategy: ProverStrategy,
    repetitions: int,
    seed: int,
    *,
    b: int,
    depth: int | None = None,
    share_oracle: bool = False,
    qubit_cap: int | None = None,
) -> RepeatResult:
    """Accept iff at least a threshold fraction of independent rounds accept.

    Each repetition commits a fresh copy of the strategy's state. By default
    every repetition draws a fresh oracle; with ``share_oracle`` a single
    oracle (from the repetition-0 stream) is reused throughout. The mode used
    is recorded in the result.
    """
    if repetitions < 1:
        raise ValidationError(f"need at least one repetition, got {repetitions}")
    tau = acceptance_threshold(instance)
    shared = (
        build_oracle(oracle_kind, b, depth=depth, seed=child_seed(seed, 0, ORACLE_STREAM))
        if share_oracle
        else None
    )
    per_round: list[bool] = []
    transcripts: list[Transcript] = []
    for rep in range(repetitions):
        if shared is not None:
            handle = shared
        else:
            handle = build_oracle(
                oracle_kind, b, depth=depth, seed=child_seed(seed, rep, ORACLE_STREAM)
            )
        transcript = run_round(
            instance,
            handle,
            strategy,
            child_rng(seed, rep, VERIFIER_STREAM),
            child_rng(seed, rep, STRATEGY_STREAM),
            qubit_cap=qubit_cap,
            trial=rep,
        )
        per_round.append(transcript.accepted)
        transcripts.append(transcript)
    count = sum(per_round)
    return RepeatResult(
        accepted=count >= tau * repetitions,
        accept_count=count,
        repetitions=repetitions,
        threshold=tau,
        oracle_mode="shared" if share_oracle else "fresh",
        per_round=per_round,
        transcripts=transcripts,
    )
