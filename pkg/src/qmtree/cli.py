"""Experiment runner with deterministic seeding and machine-readable output.

Every output begins with a header record carrying the fully resolved
configuration, including the seed, so any file can be reproduced from its
own first line. Records are emitted as CSV or JSON lines; both formats carry
the same fields and `read_records` parses either back into typed rows.

Exit codes: 0 success, 2 validation/usage error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__, merkle
from .adversary import (
    PhaseFunction,
    haar_switch_sweep,
    phase_attack_round,
    random_orthogonal_pair,
)
from .errors import QmtreeError, ValidationError
from .hamiltonian import (
    bundled_instance,
    bundled_instance_names,
    classify,
    ground_energy,
    load_instance_path,
    power_iteration_ground_energy,
)
from .oracle import build_oracle, haar_statistics, parse_oracle_spec
from .protocol import (
    acceptance_threshold,
    estimate_acceptance,
    make_strategy,
    sequential_repeat,
)
from .qstate import QuantumSystem, default_qubit_cap, random_state
from .seeds import META_STREAM, ORACLE_STREAM, STRATEGY_STREAM, VERIFIER_STREAM, child_rng, child_seed

CONFIG_PREFIX = "#config "


# -- record IO -----------------------------------------------------------------


def _cell_to_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cell_from_text(text: str):
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def render_records(fmt: str, config: dict, records: list[dict], columns: list[str] | None = None) -> str:
    """Serialize a header record plus data records to one text blob."""
    if fmt == "json-lines":
        lines = [json.dumps({"record": "config", **config}, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in records]
        return "\n".join(lines) + "\n"
    if fmt != "csv":
        raise ValidationError(f"unknown output format {fmt!r} (want csv or json-lines)")
    if columns is None:
        columns = []
        for r in records:
            for key in r:
                if key not in columns:
                    columns.append(key)
    lines = [CONFIG_PREFIX + json.dumps(config, sort_keys=True), ",".join(columns)]
    for r in records:
        lines.append(",".join(_cell_to_text(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def emit_records(
    path: str | None, fmt: str, config: dict, records: list[dict], columns: list[str] | None = None
) -> None:
    blob = render_records(fmt, config, records, columns)
    if path is None or path == "-":
        _sys.stdout.write(blob)
    else:
        Path(path).write_text(blob)


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse a file produced by emit_records, regardless of format."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValidationError(f"{path} is empty")
    if lines[0].startswith(CONFIG_PREFIX):
        config = json.loads(lines[0][len(CONFIG_PREFIX):])
        columns = lines[1].split(",") if len(lines) > 1 else []
        records = []
        for line in lines[2:]:
            cells = line.split(",")
            records.append({c: _cell_from_text(v) for c, v in zip(columns, cells)})
        return config, records
    first = json.loads(lines[0])
    if first.get("record") != "config":
        raise ValidationError(f"{path} does not start with a config record")
    first.pop("record")
    return first, [json.loads(line) for line in lines[1:]]


# -- shared helpers --------------------------------------------------------------


def _resolve_instance(spec: str):
    if os.path.exists(spec):
        return load_instance_path(spec)
    try:
        return bundled_instance(spec)
    except ValidationError:
        raise ValidationError(
            f"instance {spec!r} is neither a file nor a bundled name; bundled: {bundled_instance_names()}"
        ) from None


def _summary_base(cfg: dict, rate: float, stderr: float, trials: int) -> dict:
    return {
        "record": "summary",
        "oracle": cfg.get("oracle"),
        "b": cfg.get("b"),
        "ell": cfg.get("ell"),
        "trials": trials,
        "acceptance_rate": rate,
        "stderr": stderr,
    }


def _qubit_cap(args) -> int | None:
    return args.qubit_cap  # None falls back to env / default inside QuantumSystem


# -- subcommands ------------------------------------------------------------------


def _cmd_roundtrip(args) -> int:
    kind, depth = parse_oracle_spec(args.oracle)
    n = args.b * args.ell
    cfg = {
        "command": "roundtrip",
        "b": args.b,
        "ell": args.ell,
        "oracle": args.oracle,
        "trials": args.trials,
        "seed": args.seed,
        "qubit_cap": args.qubit_cap or default_qubit_cap(),
        "version": __version__,
    }
    rows = []
    bots = 0
    fids = []
    for t in range(args.trials):
        oracle_seed = child_seed(args.seed, t, ORACLE_STREAM)
        handle = build_oracle(kind, args.b, depth=depth, seed=oracle_seed)
        rng = child_rng(args.seed, t, VERIFIER_STREAM)
        sigma = random_state(n, child_rng(args.seed, t, STRATEGY_STREAM))
        system = QuantumSystem(qubit_cap=_qubit_cap(args))
        payload = system.alloc_state(sigma, "prover")
        out = merkle.commit(system, handle, payload, args.b)
        dec = merkle.decommit(system, handle, out.layout, set(range(args.ell, 2 * args.ell)), rng)
        fid = None
        if dec.ok:
            fid = system.pure_state_fidelity(payload, sigma)
            fids.append(fid)
        else:
            bots += 1
        rows.append(
            {
                "record": "round",
                "trial": t,
                "oracle_seed": oracle_seed,
                "bot": not dec.ok,
                "fail_node": dec.failed_node,
                "fidelity": fid,
                "forward_queries": handle.queries_G,
                "inverse_queries": handle.queries_Ginv,
            }
        )
    summary = _summary_base(cfg, (args.trials - bots) / args.trials, 0.0, args.trials)
    summary.update(
        {
            "bot_count": bots,
            "min_fidelity": min(fids) if fids else None,
            "mean_prover_G": float(args.ell - 1),
            "mean_verifier_Ginv": float(args.ell - 1),
            "mean_qubits_sent": None,
        }
    )
    rows.append(summary)
    emit_records(args.out, args.format, cfg, rows)
    print(f"roundtrip: {args.trials - bots}/{args.trials} clean, min fidelity "
          f"{min(fids) if fids else float('nan'):.12f}")
    return 0


def _cmd_run_protocol(args) -> int:
    kind, depth = parse_oracle_spec(args.oracle)
    instance = _resolve_instance(args.instance)
    strategy = make_strategy(args.strategy, instance)
    ell = instance.n_qubits // args.b
    cfg = {
        "command": "run-protocol",
        "instance": args.instance,
        "strategy": args.strategy,
        "oracle": args.oracle,
        "b": args.b,
        "ell": ell,
        "trials": args.trials,
        "seed": args.seed,
        "workers": args.workers,
        "qubit_cap": args.qubit_cap or default_qubit_cap(),
        "version": __version__,
    }
    result = estimate_acceptance(
        instance,
        kind,
        strategy,
        args.trials,
        args.seed,
        b=args.b,
        depth=depth,
        qubit_cap=_qubit_cap(args),
        workers=args.workers,
    )
    rows: list[dict] = [{"record": "round", **t.csv_row()} for t in result.transcripts]
    summary = _summary_base(cfg, result.rate, result.stderr, args.trials)
    summary.update({f"mean_{k}": v for k, v in result.mean_queries.items()})
    summary["mean_qubits_sent"] = result.mean_qubits_sent
    rows.append(summary)
    emit_records(args.out, args.format, cfg, rows)
    print(
        f"run-protocol: acceptance {result.rate:.4f} +/- {result.stderr:.4f} "
        f"over {args.trials} trials (mean qubits sent {result.mean_qubits_sent:.1f})"
    )
    return 0


def _cmd_repeat(args) -> int:
    kind, depth = parse_oracle_spec(args.oracle)
    instance = _resolve_instance(args.instance)
    strategy = make_strategy(args.strategy, instance)
    cfg = {
        "command": "repeat",
        "instance": args.instance,
        "strategy": args.strategy,
        "oracle": args.oracle,
        "b": args.b,
        "ell": instance.n_qubits // args.b,
        "repetitions": args.repetitions,
        "meta_trials": args.meta_trials,
        "share_oracle": args.share_oracle,
        "seed": args.seed,
        "qubit_cap": args.qubit_cap or default_qubit_cap(),
        "version": __version__,
    }
    rows = []
    accepted = 0
    for meta in range(args.meta_trials):
        res = sequential_repeat(
            instance,
            kind,
            strategy,
            args.repetitions,
            child_seed(args.seed, meta, META_STREAM),
            b=args.b,
            depth=depth,
            share_oracle=args.share_oracle,
            qubit_cap=_qubit_cap(args),
        )
        accepted += res.accepted
        rows.append(
            {
                "record": "meta",
                "meta": meta,
                "accepted": res.accepted,
                "accept_count": res.accept_count,
                "repetitions": res.repetitions,
                "threshold": res.threshold,
                "oracle_mode": res.oracle_mode,
            }
        )
    rate = accepted / args.meta_trials
    summary = _summary_base(cfg, rate, math.sqrt(rate * (1 - rate) / args.meta_trials), args.meta_trials)
    summary["threshold"] = acceptance_threshold(instance)
    summary["oracle_mode"] = "shared" if args.share_oracle else "fresh"
    rows.append(summary)
    emit_records(args.out, args.format, cfg, rows)
    print(f"repeat: {accepted}/{args.meta_trials} meta-trials accepted "
          f"(threshold {acceptance_threshold(instance):.3f}, oracle {summary['oracle_mode']})")
    return 0


def _cmd_attack_phase(args) -> int:
    kind, depth = parse_oracle_spec(args.oracle)
    if args.f == "parity":
        f = PhaseFunction.parity(args.b)
    elif args.f == "zero":
        f = PhaseFunction.zero(args.b)
    else:
        f = PhaseFunction.random(args.b, child_rng(args.seed, 0, STRATEGY_STREAM))
    if args.psi == "plus":
        dim = 1 << (2 * args.b)
        psi = np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)
    else:
        psi = random_state(2 * args.b, child_rng(args.seed, 1, STRATEGY_STREAM))
    cfg = {
        "command": "attack-phase",
        "b": args.b,
        "oracle": args.oracle,
        "f": args.f,
        "psi": args.psi,
        "trials": args.trials,
        "seed": args.seed,
        "version": __version__,
    }
    rows = []
    accepted = 0
    distances = []
    for t in range(args.trials):
        outcome = phase_attack_round(
            args.b, kind, psi, f, child_rng(args.seed, t, ORACLE_STREAM), depth=depth
        )
        accepted += outcome.accepted
        if outcome.revealed_trace_distance is not None:
            distances.append(outcome.revealed_trace_distance)
        rows.append(
            {
                "record": "round",
                "trial": t,
                "oracle_seed": outcome.oracle_seed,
                "accepted": outcome.accepted,
                "trace_distance": outcome.revealed_trace_distance,
            }
        )
    rate = accepted / args.trials
    summary = _summary_base(cfg, rate, math.sqrt(rate * (1 - rate) / args.trials), args.trials)
    summary["mean_trace_distance"] = float(np.mean(distances)) if distances else None
    rows.append(summary)
    emit_records(args.out, args.format, cfg, rows)
    print(f"attack-phase: acceptance {rate:.4f}, mean revealed trace distance "
          f"{summary['mean_trace_distance']}")
    return 0


def _cmd_attack_hjw(args) -> int:
    b_values = [int(x) for x in args.b_values.split(",")]
    cfg = {
        "command": "attack-hjw",
        "b_values": args.b_values,
        "draws": args.draws,
        "seed": args.seed,
        "orthogonal": not args.non_orthogonal,
        "mode": "sampled-isometry",
        "version": __version__,
    }
    sweep = haar_switch_sweep(b_values, args.draws, args.seed, orthogonal=not args.non_orthogonal)
    rows = []
    for b in b_values:
        for d, res in enumerate(sweep[b]):
            rows.append(
                {
                    "record": "draw",
                    "b": b,
                    "draw": d,
                    "predicted_overlap": res.predicted_overlap,
                    "achieved_fidelity": res.achieved_fidelity,
                    "check_pass_probability": res.check_pass_probability,
                }
            )
        fids = [r.achieved_fidelity for r in sweep[b]]
        rows.append(
            {
                "record": "summary",
                "b": b,
                "draws": args.draws,
                "mean_achieved_fidelity": float(np.mean(fids)),
                "min_achieved_fidelity": float(np.min(fids)),
                "mean_check_pass": float(np.mean([r.check_pass_probability for r in sweep[b]])),
            }
        )
    emit_records(args.out, args.format, cfg, rows)
    for b in b_values:
        fids = [r.achieved_fidelity for r in sweep[b]]
        print(f"attack-hjw: b={b} mean achieved fidelity {np.mean(fids):.6f} over {args.draws} draws")
    return 0


def _cmd_haar_stats(args) -> int:
    kind, depth = parse_oracle_spec(args.oracle)
    if depth is None:
        depth = args.depth
    lam = args.lam if args.lam is not None else 3 * args.b
    cfg = {
        "command": "haar-stats",
        "oracle": args.oracle,
        "lam": lam,
        "depth": depth,
        "samples": args.samples,
        "seed": args.seed,
        "frame_potential": args.frame_potential,
        "version": __version__,
    }
    report = haar_statistics(
        kind, lam, depth=depth, samples=args.samples, seed=args.seed,
        frame_potential=args.frame_potential,
    )
    emit_records(args.out, args.format, cfg, [{"record": "summary", **report}])
    print(
        f"haar-stats: mean |U00|^2 = {report['mean_abs_u00_sq']:.6f} "
        f"(target {report['haar_moment']:.6f}, stderr {report['stderr_abs_u00_sq']:.6f})"
    )
    return 0


def _cmd_solve_instance(args) -> int:
    instance = _resolve_instance(args.instance)
    lam_min, vec = ground_energy(instance)
    power_val, _ = power_iteration_ground_energy(instance)
    verdict = classify(instance, lam_min)
    cfg = {
        "command": "solve-instance",
        "instance": args.instance,
        "seed": args.seed,
        "version": __version__,
    }
    from .hamiltonian import assemble_dense

    h = assemble_dense(instance)
    residual = float(np.linalg.norm(h @ vec - lam_min * vec))
    row = {
        "record": "summary",
        "instance": instance.name or args.instance,
        "n_qubits": instance.n_qubits,
        "m": instance.m,
        "k": instance.k,
        "alpha": instance.alpha,
        "beta": instance.beta,
        "lambda_min": lam_min,
        "lambda_min_per_term": lam_min / instance.m,
        "power_iteration": power_val,
        "residual": residual,
        "classification": verdict,
        "label": instance.label,
    }
    emit_records(args.out, args.format, cfg, [row])
    print(
        f"solve-instance: lambda_min = {lam_min:.10f} ({lam_min / instance.m:.6f} per term), "
        f"classification {verdict}, label {instance.label}"
    )
    return 0


def _cmd_validate_instance(args) -> int:
    cfg = {
        "command": "validate-instance",
        "instance": args.instance,
        "version": __version__,
    }
    try:
        instance = _resolve_instance(args.instance)
    except QmtreeError as exc:
        emit_records(args.out, args.format, cfg, [{"record": "summary", "valid": False, "error": str(exc)}])
        print(f"validate-instance: INVALID ({exc})")
        return 2
    note = None
    if instance.n_qubits <= 10:
        verdict = classify(instance)
        if instance.label != "unknown" and verdict != instance.label:
            note = f"label is {instance.label} but ground energy classifies as {verdict}"
    emit_records(
        args.out,
        args.format,
        cfg,
        [{"record": "summary", "valid": True, "error": None, "note": note}],
    )
    print(f"validate-instance: ok{' (' + note + ')' if note else ''}")
    return 0


# -- argument parsing -----------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master 64-bit seed")
    p.add_argument("--out", default=None, help="output path ('-' or omitted: stdout)")
    p.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    p.add_argument("--qubit-cap", type=int, default=None, help="override the qubit cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmtree",
        description="Experiments on the oracle-tree commitment and the succinct argument built on it.",
    )
    parser.add_argument("--version", action="version", version=f"qmtree {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roundtrip", help="commit then fully decommit random states")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--oracle", default="haar")
    p.add_argument("--trials", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=_cmd_roundtrip)

    p = sub.add_parser("run-protocol", help="Monte Carlo acceptance of the three-message argument")
    p.add_argument("--instance", required=True, help="path or bundled instance name")
    p.add_argument("--strategy", default="honest",
                   choices=["honest", "semi-honest-ground", "semi-honest-zero"])
    p.add_argument("--oracle", default="haar")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=_cmd_run_protocol)

    p = sub.add_parser("repeat", help="sequential repetition with a threshold decision")
    p.add_argument("--instance", required=True)
    p.add_argument("--strategy", default="honest",
                   choices=["honest", "semi-honest-ground", "semi-honest-zero"])
    p.add_argument("--oracle", default="haar")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--repetitions", type=int, default=25)
    p.add_argument("--meta-trials", type=int, default=100)
    p.add_argument("--share-oracle", action="store_true",
                   help="reuse one oracle across repetitions instead of drawing fresh")
    _add_common(p)
    p.set_defaults(func=_cmd_repeat)

    p = sub.add_parser("attack-phase", help="diagonal-phase cheat on the depth-one scheme")
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--oracle", default="oh")
    p.add_argument("--f", default="parity", choices=["parity", "zero", "random"])
    p.add_argument("--psi", default="plus", choices=["plus", "random"])
    p.add_argument("--trials", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=_cmd_attack_phase)

    p = sub.add_parser("attack-hjw", help="purification-switch statistics over Haar oracles")
    p.add_argument("--b-values", default="2,3,4")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--non-orthogonal", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_attack_hjw)

    p = sub.add_parser("haar-stats", help="Monte Carlo moments of an oracle ensemble")
    p.add_argument("--oracle", default="haar")
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--lam", type=int, default=None, help="qubit arity (default 3b)")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--frame-potential", action="store_true")
    _add_common(p)
    p.set_defaults(func=_cmd_haar_stats)

    p = sub.add_parser("solve-instance", help="exact ground energy and classification")
    p.add_argument("--instance", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_solve_instance)

    p = sub.add_parser("validate-instance", help="schema and invariant checks")
    p.add_argument("--instance", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_validate_instance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except QmtreeError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def entry() -> None:
    raise SystemExit(main())
