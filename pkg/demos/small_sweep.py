"""A small Monte-Carlo SNR sweep of all three receivers.

Equivalent to ``zakisac sweep --snr-db 5,10,15 --trials 20 --modes
proposed,lmmse_modelfree,lmmse_perfect``; prints the aggregate table.

    python3 demos/small_sweep.py
"""

from zakisac.cli import MODES, RunConfig, run_sweep, summarize


def main(trials: int = 20):
    cfg = RunConfig(snr_db=(5.0, 10.0, 15.0), trials=trials, modes=MODES, seed=1)
    rows, _ = run_sweep(cfg)
    print(f"{'mode':16s} {'SNR':>5s} {'BER':>9s} {'Pd':>6s} {'range RMSE':>11s} {'vel RMSE':>9s}")
    for e in summarize(rows):
        pd = e.get("pd", float("nan"))
        print(f"{e['mode']:16s} {e['snr_db']:5.1f} {e['ber']:9.2e} {pd:6.3f} "
              f"{e.get('range_rmse', float('nan')):11.3g} {e.get('velocity_rmse', float('nan')):9.3g}")


if __name__ == "__main__":
    main()
