"""Train square and FFTP classifiers on the synthetic harmonic corpus and compare accuracy.

Usage: python scripts/desk_comparison.py [--out results/desk.json] [--seeds 0 1 2] [--epochs 4]
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from fftp.experiments import DeskSetup, run_desk_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/desk.json")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--n", type=int, default=1000, help="corpus size")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = DeskSetup()
    setup = replace(base, n_samples=args.n, seeds=tuple(args.seeds), train=replace(base.train, epochs=args.epochs))
    with threadpool_limits(limits=1):
        res = run_desk_comparison(setup)

    print(f"\nchance {res['chance']:.3f}")
    print(f"{'config':<14}{'tokens':>8}{'params':>9}{'median':>9}  per seed")
    for name, accs in res["accuracy"].items():
        print(f"{name:<14}{res['tokens'][name]:>8}{res['n_params'][name]:>9}{res['median'][name]:>9.3f}  "
              + " ".join(f"{a:.3f}" for a in accs))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(res, indent=2))
    print(f"wrote {out} ({res['seconds']:.0f} s)")


if __name__ == "__main__":
    main()
