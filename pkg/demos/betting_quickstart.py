"""A short betting run through the config layer, the harness and plot data.

Writes a config file, trains three seeds for a few updates, evaluates the final
checkpoint of seed 1 and aggregates the seeds into a plot table. Everything
lands in a temporary directory unless --out is given.

    python demos/betting_quickstart.py --updates 10
"""

import argparse
import tempfile
from pathlib import Path

from retcap.harness import default_config, emit_plotdata, evaluate, parse_config, run_experiment, serialize_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--updates", type=int, default=10)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    out = Path(args.out or tempfile.mkdtemp(prefix="betting_"))
    cfg = default_config("betting", "return_capping", seeds=[1, 2, 3], updates=args.updates,
                         eval_every=5, eval_episodes=200, checkpoint_every=5, output_dir=str(out / "run"))
    cfg_path = out / "betting.txt"
    cfg_path.write_text(serialize_config(cfg))
    print(f"config written to {cfg_path}")

    run_experiment(parse_config(cfg_path), log=print)

    res = evaluate(out / "run" / "seed_1" / "checkpoint", "betting", episodes=1000, seed=0)
    print(f"seed 1 final policy over 1000 episodes: CVaR {res['cvar']:.2f}, mean {res['mean']:.2f}")
    print(f"returns written to {res['returns_path']}")

    table = emit_plotdata(out / "run")
    print(f"plot data written to {table}")
    print(table.read_text())


if __name__ == "__main__":
    main()
