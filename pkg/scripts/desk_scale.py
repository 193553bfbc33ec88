"""Run the desk-scale campaign and print a per-condition digest.

    python scripts/desk_scale.py --out runs/desk [--jobs N]

Finished run directories under --out are reused, so an interrupted campaign
picks up where it stopped. Plot tables land in <out>/plots/.
"""

import argparse
import logging
import time

import numpy as np

from attnvsr.campaign import DeskScale, run_campaign


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--n-evals", type=int, default=DeskScale.n_evals)
    parser.add_argument("--t-final", type=float, default=DeskScale.t_final)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    desk = DeskScale(jobs=args.jobs, n_evals=args.n_evals, t_final=args.t_final)
    start = time.time()
    res = run_campaign(args.out, desk, progress=lambda msg: print(msg, flush=True))
    print()
    for family, runs in res.runs.items():
        best = [r.best_fitness for r in runs]
        print(f"{family:>13s}: median best {np.median(best):+.4f}  (per seed {np.round(best, 4).tolist()})")
    print(f"zero genotype: max |v| on held-out terrains {np.max(np.abs(res.baseline)):.3e}")
    print(f"alpha/eta medians: {np.median([r['alpha'] for r in res.alpha_eta]):.3f} / "
          f"{np.median([r['eta'] for r in res.alpha_eta]):.3f}")
    print(f"done in {time.time() - start:.0f} s")


if __name__ == "__main__":
    main()
