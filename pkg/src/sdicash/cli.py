"""Command-line interface: ``sdicash <command> [options]``.

Exit codes: 0 success, 1 verification rejected, 2 invalid input,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import adversary, bounds, harness, optimizer, protocol

EXIT_OK, EXIT_REJECTED, EXIT_INVALID, EXIT_INVARIANT = 0, 1, 2, 3


class InvariantViolation(RuntimeError):
    pass


# --- output ---------------------------------------------------------------------


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _flatten(record: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in record.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        elif isinstance(v, (list, tuple)):
            out[name] = json.dumps(_plain(v))
        else:
            out[name] = v
    return out


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render(data, fmt: str) -> str:
    """Render a record (dict) or a list of rows (list of dicts)."""
    data = _plain(data)
    if fmt == "json":
        return json.dumps(data, indent=2)
    rows = data if isinstance(data, list) else [data]
    flat = [_flatten(r) for r in rows]
    columns = list(dict.fromkeys(c for r in flat for c in r))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(flat)
        return buf.getvalue().rstrip("\n")
    if isinstance(data, list):
        cells = [[_fmt_cell(r.get(c, "")) for c in columns] for r in flat]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
        return "\n".join(lines)
    width = max(len(c) for c in columns)
    return "\n".join(f"{c.ljust(width)}  {_fmt_cell(flat[0][c])}" for c in columns)


def emit(data, args) -> None:
    text = render(data, args.format)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc


def _defaults(args, **values):
    for name, value in values.items():
        if getattr(args, name, None) is None:
            setattr(args, name, value)


# --- commands -------------------------------------------------------------------


def cmd_bounds(args) -> int:
    _defaults(args, n=463018, k=1)
    report = bounds.bounds_report(args.n, args.eta, args.k)
    data = report.to_dict()
    if args.target is not None:
        n_req, eta_req = bounds.required_n(args.target, args.k)
        data.update(target=args.target, required_n=n_req, required_eta=eta_req)
    if args.format == "table":
        rows = report.rows()
        if args.target is not None:
            rows += [("target", f"{args.target:g}"), ("required_n", str(n_req)),
                     ("required_eta", f"{eta_req:.6f}")]
        width = max(len(k) for k, _ in rows)
        text = "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return EXIT_OK
    emit(data, args)
    return EXIT_OK


_MINT_SOURCES = {
    "honest": protocol.honest_source,
    "attack1": adversary.attack1_source,
    "attack3": adversary.ATTACK3.source,
}


def cmd_mint(args) -> int:
    _defaults(args, n=16, seed=0)
    key = protocol.generate_key(args.n, np.random.default_rng(protocol.derive_seed(args.seed, args.serial)))
    note = protocol.mint(_MINT_SOURCES[args.source], key, args.serial)
    if args.key_out:
        Path(args.key_out).write_text(json.dumps(key.to_dict(args.serial)) + "\n")
        payload = note.to_dict()
    else:
        payload = {"note": note.to_dict(), "key": key.to_dict(args.serial)}
    text = json.dumps(payload, indent=None if args.out else 2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


_TERMINALS = {
    "honest": protocol.honest_terminal_vectorized,
    "z": protocol.z_readout_terminal,
    "attack3": adversary.ATTACK3.terminal,
}


def cmd_verify(args) -> int:
    _defaults(args, theta=0.8475, seed=0)
    doc = _read_json(args.note)
    if "note" in doc and "key" in doc:
        note_doc, key_doc = doc["note"], doc["key"]
    else:
        if not args.key:
            raise ValueError("--key is required when the note file holds only the banknote")
        note_doc, key_doc = doc, _read_json(args.key)
    note = protocol.Banknote.from_dict(note_doc)
    key = protocol.SecretKey.from_dict(key_doc)
    registry = protocol.BankRegistry(max(args.branch + 1, 1))
    registry.register(note.serial, key)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(0, harness.ROLE_BRANCH + args.branch)))
    terminal = _TERMINALS[args.terminal]
    if args.verifier == "wiesner":
        result, _ = protocol.verify_wiesner(note, registry, args.branch, args.theta, rng)
    elif args.verifier == "basis_revealing":
        result, _ = protocol.verify_basis_revealing(note, registry, args.branch, protocol.basis_terminal,
                                                    args.theta, rng)
    elif args.mode == "at_distance":
        result, _ = protocol.verify_at_distance(note, registry, args.branch, terminal,
                                                protocol.LIARS[args.liar], args.theta, rng)
    else:
        result, _ = protocol.verify_at_bank(note, registry, args.branch, terminal, args.theta, rng)
    emit({"serial": note.serial, "accepted": result.accepted, "guess_count": result.guess_count,
          "threshold_count": result.threshold_count, "n": result.n, "rate": result.rate}, args)
    return EXIT_OK if result.accepted else EXIT_REJECTED


def cmd_attack(args) -> int:
    _defaults(args, seed=0)
    name = args.name
    if name == "nogo":
        _defaults(args, n=100_000, theta=0.8475, trials=0)
        res = adversary.nogo_demo(adversary.honest_law(), args.theta, args.n, args.trials,
                                  np.random.default_rng(args.seed))
        emit({"attack": name, "theta": args.theta, "n": args.n, **res.__dict__}, args)
        return EXIT_OK
    if name == "attack2":
        _defaults(args, n=1000, trials=10)
        exact = 0
        for t in range(args.trials):
            key = protocol.generate_key(args.n, harness.trial_rng(args.seed, t, harness.ROLE_KEY))
            exact += adversary.attack2_superdense(key, harness.trial_rng(args.seed, t, harness.ROLE_ADVERSARY)) == key
        emit({"attack": name, "n": args.n, "trials": args.trials, "keys_recovered_exactly": exact,
              "recovery_rate": exact / args.trials}, args)
        return EXIT_OK
    _defaults(args, n=10_000, theta=0.8475, trials=100, k=2)
    verifier = args.verifier or ("wiesner" if name == "attack1" else "sdi")
    cfg = harness.ExperimentConfig(n=args.n, theta=args.theta, eta=args.eta, k=args.k, trials=args.trials,
                                   seed=args.seed, strategy=name, verifier=verifier, workers=args.workers)
    est = harness.monte_carlo_forgery(cfg)
    emit({"attack": name, "verifier": verifier, **est.to_dict()}, args)
    return EXIT_OK


def cmd_optimize(args) -> int:
    _defaults(args, seed=0)
    obj = args.objective
    if obj == "chain":
        _defaults(args, trials=1000)
        rng = np.random.default_rng(args.seed)
        worst_triple, worst_gap = -np.inf, -np.inf
        for _ in range(args.trials):
            chain = optimizer.check_inequality_chain(optimizer.random_strategy(rng))
            worst_triple = max(worst_triple, chain.triple_sum)
            worst_gap = max(worst_gap, chain.p0 + chain.p1 - 1 - chain.p_xor)
        ok = worst_triple <= bounds.TRIPLE_SUM_BOUND + 1e-6 and worst_gap <= 1e-9
        emit({"objective": "chain", "samples": args.trials, "max_triple_sum": worst_triple,
              "triple_sum_bound": bounds.TRIPLE_SUM_BOUND, "max_chain_gap": worst_gap, "holds": ok}, args)
        if not ok:
            raise InvariantViolation("inequality chain violated")
        return EXIT_OK
    if obj == "grid":
        value, angle = optimizer.grid_single_guessing(args.step)
        emit({"objective": "grid_single", "step_deg": args.step, "best_value": value,
              "relative_angle_deg": angle, "bound": bounds.P_Q}, args)
        return EXIT_OK
    kw = dict(restarts=args.restarts, tolerance=args.tolerance, seed=args.seed,
              maxiter=args.maxiter, workers=args.workers)
    if obj == "single":
        report = optimizer.maximize_single_guessing(**kw)
    elif obj == "classical":
        report = optimizer.maximize_single_guessing(classical=True, **kw)
    else:
        report = optimizer.maximize_double_guessing(**kw)
    data = report.to_dict()
    if args.format != "json":
        data.pop("best_strategy")
    emit(data, args)
    if report.bound - report.max_evaluated < -1e-6:
        raise InvariantViolation(f"{report.objective} value {report.max_evaluated} exceeds bound {report.bound}")
    return EXIT_OK


def _config(args) -> harness.ExperimentConfig:
    _defaults(args, n=10_000, theta=0.86, k=2, trials=1000, seed=0)
    strategy, path = args.strategy, None
    if args.box:
        strategy, path = "box", args.box
    elif args.quantum:
        strategy, path = "quantum", args.quantum
    return harness.ExperimentConfig(
        n=args.n, theta=args.theta, eta=args.eta, k=args.k, trials=args.trials, seed=args.seed,
        strategy=strategy, source_path=path, verifier=args.verifier or "sdi", mode=args.mode,
        liar=args.liar, workers=args.workers)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    est = harness.monte_carlo_forgery(cfg)
    emit({"config": cfg.summary(), **est.to_dict()}, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = harness.parse_range(args.range)
    rows = harness.sweep(args.param, values, cfg, empirical=args.empirical)
    if not args.empirical:
        rows = [{c: r[c] for c in harness.SWEEP_COLUMNS[:9]} for r in rows]
    emit(rows, args)
    return EXIT_OK


def cmd_audit(args) -> int:
    _defaults(args, n=10_000, eta=0.05, trials=1000, seed=0)
    cfg = _config(args)
    box = harness.resolve_box(cfg)
    if box is None:
        raise ValueError("audit needs a collusion-box strategy")
    report = harness.concentration_audit(box, args.n, args.eta, args.trials, args.seed)
    emit(report.to_dict(), args)
    if not report.vacuous and not report.within_bounds:
        raise InvariantViolation("empirical concentration exceeds its Hoeffding envelope")
    return EXIT_OK


def cmd_exact(args) -> int:
    _defaults(args, n=2, theta=0.5)
    cfg = _config(args)
    box = harness.resolve_box(cfg)
    if box is None:
        raise ValueError("exact enumeration needs a collusion-box strategy")
    p = harness.exact_forgery_small_n(box, args.n, args.theta)
    p_xor = harness.exact_forgery_xor(box, args.n, args.theta)
    emit({"n": args.n, "theta": args.theta, "p_forgery": p, "p_forgery_xor": p_xor,
          "difference": abs(p - p_xor)}, args)
    if abs(p - p_xor) > 1e-12:
        raise InvariantViolation("forgery probability changed under the XOR transform")
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, help="master seed (non-negative integer)")
    g.add_argument("--n", type=int, help="rounds (qubits) per note")
    g.add_argument("--theta", type=float, help="acceptance threshold fraction")
    g.add_argument("--eta", type=float, help="typicality slack for the analytic bound (default eta_max)")
    g.add_argument("--k", type=int, help="number of bank branches")
    g.add_argument("--trials", type=int, help="Monte Carlo trials")
    g.add_argument("--format", choices=("table", "json", "csv"), default="table")
    g.add_argument("--out", help="write output to this file instead of stdout")
    g.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    return p


def _experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--strategy", default="copy_box", choices=harness.STRATEGIES)
    p.add_argument("--box", help="collusion box JSON (64 entries)")
    p.add_argument("--quantum", help="quantum collusion strategy JSON")
    p.add_argument("--verifier", choices=harness.VERIFIERS)
    p.add_argument("--mode", default="at_bank", choices=harness.MODES)
    p.add_argument("--liar", default="identity", choices=sorted(protocol.LIARS))


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="sdicash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", parents=[common], help="closed-form constants and forgery bound")
    p.add_argument("--target", type=float, help="also report the n needed to reach this forgery bound")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("mint", parents=[common], help="issue a banknote and its key as JSON")
    p.add_argument("--serial", default="note-0")
    p.add_argument("--source", default="honest", choices=sorted(_MINT_SOURCES))
    p.add_argument("--key-out", help="write the key to its own file")
    p.set_defaults(func=cmd_mint)

    p = sub.add_parser("verify", parents=[common], help="verify a banknote file (exit 1 if rejected)")
    p.add_argument("note", help="banknote JSON (or a mint bundle holding note and key)")
    p.add_argument("--key", help="key JSON")
    p.add_argument("--branch", type=int, default=0)
    p.add_argument("--terminal", default="honest", choices=sorted(_TERMINALS))
    p.add_argument("--verifier", default="sdi", choices=harness.VERIFIERS)
    p.add_argument("--mode", default="at_bank", choices=harness.MODES)
    p.add_argument("--liar", default="identity", choices=sorted(protocol.LIARS))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack", parents=[common], help="run one of the known attacks")
    p.add_argument("name", choices=("attack1", "attack2", "attack3", "nogo"))
    p.add_argument("--verifier", choices=harness.VERIFIERS)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("optimize", parents=[common], help="numerical search over qubit strategies")
    p.add_argument("objective", choices=("single", "double", "classical", "chain", "grid"))
    p.add_argument("--restarts", type=int, default=optimizer.DEFAULT_RESTARTS)
    p.add_argument("--tolerance", type=float, default=optimizer.DEFAULT_TOL)
    p.add_argument("--maxiter", type=int, default=optimizer.DEFAULT_MAXITER)
    p.add_argument("--step", type=float, default=0.5, help="grid step in degrees")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo forgery experiment")
    _experiment_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="bounds (and estimates) over a parameter grid")
    _experiment_flags(p)
    p.add_argument("--param", required=True, choices=harness.SWEEP_PARAMETERS)
    p.add_argument("--range", required=True, help="start:stop:count or comma-separated values")
    p.add_argument("--empirical", action="store_true", help="add Monte Carlo columns")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", parents=[common], help="concentration audit of a collusion box")
    _experiment_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("exact", parents=[common], help="exact small-n forgery probability of a box")
    _experiment_flags(p)
    p.set_defaults(func=cmd_exact)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, KeyError, protocol.ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
