"""Command-line entry point: ``retcap run|eval|plotdata|oracle``.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from ..envs import ENVIRONMENTS
from ..oracle import SUITE, OracleError, builtin_mdp, load_tiny_mdp, verify_proposition1
from ..risk import InvalidInput
from .config import ConfigError, parse_config
from .experiment import RunError, emit_plotdata, evaluate, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    results = run_experiment(cfg, resume=not args.fresh, log=None if args.quiet else _log)
    for seed, rows in results.items():
        last = rows[-1] if rows else None
        if last is None:
            print(f"seed {seed}: 0 updates")
        else:
            print(f"seed {seed}: {len(rows)} updates, {last['cumulative_env_steps']} env steps, "
                  f"final eval CVaR {last['eval_cvar_alpha']!r}, final eval mean {last['eval_return_mean']!r}")
    print(f"outputs in {cfg.run_dir()}")
    return EXIT_OK


def cmd_eval(args) -> int:
    res = evaluate(args.checkpoint, args.env, args.alpha, args.episodes, args.seed, args.out)
    print(f"cvar {res['cvar']!r}")
    print(f"var {res['var']!r}")
    print(f"mean {res['mean']!r}")
    print(f"returns {res['returns_path']}")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    print(emit_plotdata(args.dir, args.out))
    return EXIT_OK


def cmd_oracle(args) -> int:
    names = list(SUITE) if args.file == "suite" else [args.file]
    ok = True
    for name in names:
        if Path(name).exists():
            mdp = load_tiny_mdp(name)
        elif name in SUITE:
            mdp = builtin_mdp(name)
        else:
            raise OracleError(f"no TinyMdp file {name!r} (built-in names: suite, {', '.join(SUITE)})")
        if args.alpha is None and mdp.alpha is None:
            raise OracleError(f"{name}: no alpha line in the file; pass --alpha")
        report = verify_proposition1(mdp, args.alpha, cap_offset=args.cap_offset)
        print("\n".join(report.lines()))
        ok &= report.passed
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retcap", description="Return Capping and CVaR policy-gradient experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train every seed of an experiment config")
    r.add_argument("config")
    r.add_argument("--fresh", action="store_true", help="ignore existing checkpoints and start over")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate a saved policy")
    e.add_argument("checkpoint", help="checkpoint directory or policy.bin")
    e.add_argument("env", choices=sorted(ENVIRONMENTS))
    e.add_argument("--alpha", type=float, default=0.2)
    e.add_argument("--episodes", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", help="where to write the return list (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("plotdata", help="merge the seeds of a run directory into plotdata.csv")
    d.add_argument("dir")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)

    o = sub.add_parser("oracle", help="exact check of the capped-expectation / CVaR optimum on a TinyMdp")
    o.add_argument("file", help="TinyMdp file, a built-in name, or 'suite'")
    o.add_argument("--alpha", type=float)
    o.add_argument("--cap-offset", type=float, default=0.0,
                   help="shift the cap away from VaR of the optimum (for sensitivity demos)")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, OracleError, InvalidInput) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except RunError as exc:
        _log(f"error: {exc}")
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        _log(f"error: {type(exc).__name__}: {exc}")
        if "--debug" in sys.argv:
            traceback.print_exc()
        return EXIT_RUNTIME
