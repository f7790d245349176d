"""Command-line front end.

Subcommands: keygen, basis, phase1, simulate, dp-budget, attack,
report.  Exit codes: 0 success, 1 configuration or usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import network as netmod
from .accounting import DPParams, budget, sensitivity_bound, tail_for_delta
from .harness import (
    ConfigError,
    derived_seed,
    load_config,
    run_accuracy_experiment,
    run_privacy_experiment,
)
from .noise import generate_keyring, run_phase1, transcript_json
from .polybasis import generate_system, parse_monomial_list

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1, not argparse's default 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="efpsn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parser_class=_Parser, help="generate an agent keyring")
    p.add_argument("--bits", type=int, default=32, help="prime size in bits (>= 16)")
    p.add_argument("--count", type=int, default=1, help="number of agents")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write the keyring JSON here")

    p = sub.add_parser("basis", parser_class=_Parser, help="build an orthonormal system")
    p.add_argument("--K", type=int, required=True, help="maximum total degree")
    p.add_argument("--m", type=int, required=True, help="number of variables")
    p.add_argument("--N", type=int, required=True, help="number of elements")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--monomials", help="fixed comma-separated monomial list")
    p.add_argument("--out", type=Path, help="write the system JSON here")

    p = sub.add_parser("phase1", parser_class=_Parser, help="run the encrypted noise exchange")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--gamma", type=float, help="override: use a single noise magnitude")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--audit", action="store_true", help="also dump the wire transcript")

    p = sub.add_parser("simulate", parser_class=_Parser, help="run the accuracy experiment")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("dp-budget", parser_class=_Parser, help="closed-form privacy budget")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--decay", type=float, required=True, help="noise decay exponent")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--tail", type=float, help="tail parameter R")
    group.add_argument("--delta", type=float, help="target delta (sets R)")
    p.add_argument("--graph", required=True, help="kind:n, e.g. path:3 or ring_chord:5")
    p.add_argument("--f-diff", required=True, help="comma list of coefficient differences")

    p = sub.add_parser("attack", parser_class=_Parser, help="run the privacy experiment")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("report", parser_class=_Parser, help="summarize a run directory")
    p.add_argument("--dir", type=Path, required=True)
    return parser


def _cmd_keygen(args) -> int:
    keyring = generate_keyring(args.count, args.bits, args.seed)
    doc = [json.loads(kp.to_json()) for kp in keyring]
    text = json.dumps(doc, indent=2)
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_basis(args) -> int:
    fixed = parse_monomial_list(args.monomials, args.m) if args.monomials else None
    system = generate_system(args.K, args.m, args.N, args.seed, fixed)
    for k, element in enumerate(system.elements, start=1):
        print(f"e{k} = {element}")
    if args.out:
        args.out.write_text(system.to_json() + "\n")
    return EXIT_OK


def _cmd_phase1(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    from .harness import _KEY_STREAM, _NOISE_STREAM, gamma_key

    net = netmod.from_spec(cfg.graph)
    gamma = args.gamma if args.gamma is not None else cfg.noise.gammas[0]
    noise_cfg = cfg.noise.config_for(gamma)
    keyring = generate_keyring(net.n, cfg.noise.key_bits, derived_seed(cfg.seed, _KEY_STREAM))
    result = run_phase1(
        net,
        noise_cfg,
        keyring,
        derived_seed(cfg.seed, _NOISE_STREAM, 0, gamma_key(gamma)),
        audit=args.audit,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["agent," + ",".join(f"k{k + 1}" for k in range(result.n_terms))]
    for i in range(result.n):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in result.eta_bar[i]))
    (args.out / "coefficients.csv").write_text("\n".join(lines) + "\n")
    if args.audit:
        (args.out / "transcript.json").write_text(transcript_json(result) + "\n")
    print(f"wrote {args.out / 'coefficients.csv'}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    report = run_accuracy_experiment(cfg)
    paths = report.write(args.out)
    print(f"wrote {paths['results']} and {paths['summary']}")
    return EXIT_OK


def _cmd_dp_budget(args) -> int:
    kind, _, count = args.graph.partition(":")
    if not count.isdigit():
        raise ConfigError(f"graph must be kind:n, got {args.graph!r}")
    net = netmod.from_spec({"kind": kind, "n": int(count)})
    f_diff = np.array([float(v) for v in args.f_diff.split(",")])
    tail = args.tail if args.tail is not None else tail_for_delta(args.delta)
    params = DPParams(args.q, args.decay, args.gamma, tail)
    b = budget(
        sensitivity_bound(f_diff, params),
        tail,
        net.algebraic_connectivity,
        net.laplacian_spectral_radius,
    )
    print(
        json.dumps(
            {
                "epsilon": b.epsilon,
                "delta": b.delta,
                "sensitivity": b.sensitivity,
                "mu_min": net.algebraic_connectivity,
                "mu_max": net.laplacian_spectral_radius,
            },
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_attack(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    report = run_privacy_experiment(cfg, out_dir=args.out)
    paths = report.write(args.out)
    print(f"wrote {paths['results']} and {paths['summary']}")
    return EXIT_OK


def _cmd_report(args) -> int:
    summary_path = args.dir / "summary.json"
    results_path = args.dir / "results.csv"
    if not summary_path.exists() or not results_path.exists():
        raise ConfigError(f"{args.dir} does not contain summary.json and results.csv")
    summary = json.loads(summary_path.read_text())
    rows = results_path.read_text().strip().splitlines()
    print(f"experiment: {summary.get('experiment')}")
    print(f"schema_version: {summary.get('schema_version')}")
    print(f"metric rows: {len(rows) - 1}")
    collected: dict[tuple[str, str, str], list[float]] = {}
    for line in rows[1:]:
        _, algorithm, gamma, _, metric, value = line.split(",")
        if metric in ("final_deviation", "accuracy", "epsilon", "attack_mse"):
            collected.setdefault((algorithm, gamma, metric), []).append(float(value))
    for (algorithm, gamma, metric), values in sorted(collected.items()):
        mean = sum(values) / len(values)
        print(f"{algorithm:>12} gamma={gamma:>10} {metric} = {mean:.6g}")
    return EXIT_OK


_COMMANDS = {
    "keygen": _cmd_keygen,
    "basis": _cmd_basis,
    "phase1": _cmd_phase1,
    "simulate": _cmd_simulate,
    "dp-budget": _cmd_dp_budget,
    "attack": _cmd_attack,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
