"""Accelerated versus ordinary receiver iterations on the same frames.

Prints the objective every few iterations for one frame and the number of
iterations each variant needs to settle within 1% of its final objective on
a handful of frames.

    python3 demos/convergence.py
"""

import numpy as np

from zakisac.cli import RunConfig, convergence_trace, iterations_to_plateau


def main(trials: int = 4):
    cfg = RunConfig(snr_db=(10.0,), seed=7)
    rows = convergence_trace(cfg, trials=trials)

    def series(variant, trial):
        return [r["objective"] for r in rows if r["variant"] == variant and r["trial"] == trial]

    acc, ordi = series("accelerated", 0), series("ordinary", 0)
    print("  t   accelerated      ordinary")
    for t in range(0, max(len(acc), len(ordi)), 25):
        a = f"{acc[t]:12.5g}" if t < len(acc) else " " * 12
        o = f"{ordi[t]:12.5g}" if t < len(ordi) else " " * 12
        print(f"{t:3d}  {a}  {o}")

    print("\ntrial  plateau(accelerated)  plateau(ordinary)")
    ratios = []
    for trial in range(trials):
        a = iterations_to_plateau(series("accelerated", trial))
        o = iterations_to_plateau(series("ordinary", trial))
        ratios.append(o / max(a, 1))
        print(f"{trial:5d}  {a:20d}  {o:17d}")
    print(f"median ratio {np.median(ratios):.2f}")


if __name__ == "__main__":
    main()
