"""Command-line entry point: ``dbound <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from pathlib import Path

from . import __version__
from .adversaries import FraudKind, FraudStrategy, known_bits_mask, simulate_fraud, theorem_bound
from .attacks import SessionSource, attack_hitomi, dictionary_attack_ideal, dictionary_attack_noisy
from .channel import LinkPair
from .core import RngStream
from .harness import ConfigError, ExperimentConfig, run_and_write, threshold_row
from .protocols import ProtocolId, ProtocolParams, ReaderDatabase, TagIdentity, run_session

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _protocol(text: str) -> ProtocolId:
    try:
        return ProtocolId.parse(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown protocol {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dbound", description="Distance-bounding protocol simulator and attack toolkit.")
    p.add_argument("--version", action="version", version=f"dbound {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="honest-session statistics")
    s.add_argument("--protocol", type=_protocol, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--ber", type=float, default=0.0)
    s.add_argument("--ber-mode", choices=("per-link", "end-to-end"), default="per-link")
    s.add_argument("--tau", type=int, default=1)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true", help="print JSON instead of text")

    a = sub.add_parser("attack", help="dictionary attack runs")
    a.add_argument("mode", choices=("ideal", "noisy", "hitomi"))
    a.add_argument("--n", type=int, required=True)
    a.add_argument("--protocol", type=_protocol, default=None, help="swiss-knife (default) or reid-split")
    a.add_argument("--ber", type=float, default=0.0)
    a.add_argument("--p", type=float, default=1.0)
    a.add_argument("--nonce-bits", type=int, default=None)
    a.add_argument("--cap", type=int, default=None, help="session cap")
    a.add_argument("--aggregation", choices=("mode", "majority"), default="mode")
    a.add_argument("--candidate-policy", choices=("reset", "persist"), default="reset")
    a.add_argument("--trials", type=int, default=10)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", type=Path, default=None, help="write per-trial reports as JSON")

    f = sub.add_parser("fraud", help="fraud-strategy success estimation")
    f.add_argument("strategy", choices=[k.value for k in FraudKind])
    f.add_argument("--protocol", type=_protocol, required=True)
    f.add_argument("--n", type=int, required=True)
    f.add_argument("--v", type=int, default=None, help="unknown key bits (terrorist)")
    f.add_argument("--revealed-share", type=int, choices=(0, 1), default=0)
    f.add_argument("--on-miss", choices=("guess", "wait"), default="guess")
    f.add_argument("--tau", type=int, default=1)
    f.add_argument("--ber", type=float, default=0.0)
    f.add_argument("--engine", choices=("vector", "scalar"), default="vector")
    f.add_argument("--trials", type=int, default=100000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--json", action="store_true")

    t = sub.add_parser("threshold", help="optimal threshold and Hoeffding bounds")
    t.add_argument("--n", type=_ints, required=True, help="one value or a comma-separated list")
    t.add_argument("--omega", type=_floats, required=True)
    t.add_argument("--rho", type=_floats, default=[1.0])
    t.add_argument("--grid", action="store_true", help="print every combination as CSV")

    e = sub.add_parser("experiment", help="run an experiment grid from a TOML config")
    e.add_argument("--config", type=Path, required=True)
    e.add_argument("--out", type=Path, default=None)
    e.add_argument("--workers", type=int, default=None)
    return p


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise UsageError(msg)


def cmd_simulate(args) -> int:
    _need(args.trials >= 1, "--trials must be at least 1")
    _need(0.0 <= args.ber <= 0.5, "--ber must be in [0, 1/2]")
    params = ProtocolParams(args.protocol, args.n, tau=args.tau)
    links = LinkPair.symmetric(args.ber, args.ber_mode)
    root = RngStream(args.seed, "cli/simulate")
    acc = auth = 0
    errs = {"err_c": [], "err_r": [], "err_t": []}
    for i in range(args.trials):
        rng = root.child(f"trial{i}")
        tag = TagIdentity.random(rng.child("tag"), args.n)
        tr = run_session(params, tag, ReaderDatabase([tag]), links.forward, links.backward, rng=rng.child("session"))
        v = tr.verdict
        acc += v.accepted
        auth += v.reader_auth_ok
        for k in errs:
            errs[k].append(getattr(v, k))
    out = {
        "protocol": params.protocol.value,
        "n": args.n,
        "ber": args.ber,
        "tau": args.tau,
        "trials": args.trials,
        "acceptance_rate": acc / args.trials,
        "reader_auth_rate": auth / args.trials,
        **{f"mean_{k}": statistics.fmean(v) for k, v in errs.items()},
    }
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        for k, v in out.items():
            print(f"{k}: {v}")
    return EXIT_OK


def cmd_attack(args) -> int:
    _need(args.trials >= 1, "--trials must be at least 1")
    _need(0.0 <= args.ber <= 0.5, "--ber must be in [0, 1/2]")
    root = RngStream(args.seed, f"cli/attack/{args.mode}")
    reports = []
    for i in range(args.trials):
        rng = root.child(f"trial{i}")
        tag = TagIdentity.random(rng.child("tag"), args.n)
        if args.mode == "hitomi":
            params = ProtocolParams(ProtocolId.HITOMI, args.n, nonce_bits=args.nonce_bits)
            rep = attack_hitomi(SessionSource(params, tag), args.n, rng.child("sessions"), args.cap or 10**6)
        else:
            proto = args.protocol or ProtocolId.SWISS_KNIFE
            _need(proto is not ProtocolId.HITOMI, "use 'attack hitomi' for the Hitomi protocol")
            params = ProtocolParams(proto, args.n, nonce_bits=args.nonce_bits)
            if args.mode == "ideal":
                rep = dictionary_attack_ideal(SessionSource(params, tag), args.n, rng.child("sessions"), args.cap)
            else:
                links = LinkPair.symmetric(args.ber)
                rep = dictionary_attack_noisy(
                    args.n, links.forward, links.backward, args.p, tag.x, rng.child("sessions"),
                    params=params, tag_id=tag.id, aggregation=args.aggregation,
                    candidate_policy=args.candidate_policy, session_cap=args.cap,
                )
        reports.append(rep)
    sessions = [r.sessions_used for r in reports]
    print(f"mode: {args.mode}  n: {args.n}  trials: {args.trials}")
    print(f"mean_sessions: {statistics.fmean(sessions):.6g}")
    print(f"successes: {sum(r.success for r in reports)}")
    if args.mode == "hitomi":
        bits = sum(r.bits_set for r in reports)
        acc = sum(r.bits_set_correct for r in reports) / bits if bits else float("nan")
        print(f"bits_set: {bits}  accuracy: {acc:.4f}")
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_fraud(args) -> int:
    _need(args.trials >= 1, "--trials must be at least 1")
    kind = FraudKind(args.strategy)
    if kind is FraudKind.TERRORIST:
        v = args.n if args.v is None else args.v
        _need(0 <= v <= args.n, "--v must be in 0..n")
        strategy = FraudStrategy(kind, revealed_share=args.revealed_share, known_key_bits=known_bits_mask(args.n, v))
    else:
        _need(args.v is None, "--v applies to the terrorist strategy only")
        strategy = FraudStrategy(kind, on_miss=args.on_miss)
    params = ProtocolParams(args.protocol, args.n, tau=args.tau)
    links = LinkPair.symmetric(args.ber)
    est = simulate_fraud(strategy, params, args.trials, RngStream(args.seed, f"cli/fraud/{kind.value}"), args.engine, links)
    out = {
        "strategy": kind.value,
        "protocol": params.protocol.value,
        "n": args.n,
        "v": strategy.unknown_bits(args.n),
        "tau": args.tau,
        "trials": est.trials,
        "successes": est.successes,
        "p_hat": est.p_hat,
        "ci95": [est.ci_low, est.ci_high],
        "theorem_bound": theorem_bound(strategy, params),
    }
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        for k, v in out.items():
            print(f"{k}: {v}")
    return EXIT_OK


def cmd_threshold(args) -> int:
    rows = [threshold_row(n, w, r) for n in args.n for w in args.omega for r in args.rho]
    if args.grid or len(rows) > 1:
        cols = list(rows[0])
        print(",".join(cols))
        for row in rows:
            print(",".join("" if row[c] is None else str(row[c]) for c in cols))
        return EXIT_OK
    row = rows[0]
    if row["tau"] is None:
        raise UsageError(row["error"])
    print(f"tau (real): {row['tau']:.12g}")
    print(f"tau (integer, ceiling): {row['tau_int']}")
    print(f"regime p_t < tau/n < p_a: {row['p_t']:.6g} < {row['tau_over_n']:.6g} < {row['p_a']:.6g} -> "
          f"{'ok' if row['in_regime'] else 'VIOLATED'}")
    if row["in_regime"]:
        print(f"false-accept bound: {row['false_accept_bound']:.6g}")
        print(f"false-reject bound: {row['false_reject_bound']:.6g}")
        print("ceiling raises tau: fewer false rejections, more false acceptances than the real-valued optimum")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    result, paths = run_and_write(cfg, args.out, args.workers)
    print(f"{cfg.kind}: {len(result.rows)} rows in {result.wall_time:.1f}s")
    for p in paths:
        print(p)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "fraud": cmd_fraud,
    "threshold": cmd_threshold,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"dbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # bad parameter values surface here from the library's validation
        print(f"dbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"dbound: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
