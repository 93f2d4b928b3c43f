"""Monte-Carlo harness: configuration, trial simulation, sweeps and traces.

Config files are flat ``key = value`` text; ``#`` starts a comment and lists
are comma separated. Recognized keys are the fields of :class:`RunConfig`.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .anm import SolverBudget
from .channel import ScenarioSpec, add_noise, complex_normal, draw_paths, snr_to_sigma2, trial_rng
from .evaluation import TrialMetrics, channel_rmse, sensing_metrics
from .frame import Constellation, GridConfig, frame_vector, layout_from_config, random_bits
from .initialization import detect_data, init_state
from .isac import IsacOptions, run
from .modem import apply_time_channel, demodulate, effective_channel_from_paths, modulate

MODES = ("proposed", "lmmse_modelfree", "lmmse_perfect")

SNR_NOTE = ("SNR is the per-sample ratio of unit symbol energy to noise variance: "
            "sigma2 = 10^(-snr/10); total transmit energy is MN.")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a sweep."""

    M: int = 8
    N: int = 16
    delta_f: float = 30e3
    f_c: float = 24e9
    pilot_region: Optional[Tuple[int, ...]] = None
    guard_region: Optional[Tuple[int, ...]] = None
    P: int = 1
    delay_cells: Tuple[float, float] = (0.5, 1.5)
    doppler_cells: Tuple[float, float] = (0.0, 1.5)
    constellation: str = "BPSK"
    snr_db: Tuple[float, ...] = (10.0,)
    trials: int = 10
    seed: int = 0
    modes: Tuple[str, ...] = ("proposed",)
    accelerated: bool = True
    T_max: int = 300
    eta_scale: float = 1.0
    alpha_rule: str = "lipschitz"
    K_max: int = 50
    oversampling: int = 4
    newton_steps: int = 10
    out: str = "results.csv"
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ValueError(f"unknown mode(s) {bad}; choose from {MODES}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        Constellation.make(self.constellation)
        self.layout()
        return self

    @property
    def grid(self) -> GridConfig:
        return GridConfig(self.M, self.N, self.delta_f, self.f_c)

    def layout(self):
        return layout_from_config(self.grid, self.pilot_region, self.guard_region)

    def options(self, accelerated: Optional[bool] = None) -> IsacOptions:
        budget = SolverBudget(K_max=self.K_max, oversampling=self.oversampling,
                              newton_steps=self.newton_steps)
        acc = self.accelerated if accelerated is None else accelerated
        return IsacOptions(accelerated=acc, T_max=self.T_max, eta_scale=self.eta_scale,
                           alpha_rule=self.alpha_rule, budget=budget)


_TUPLE_KEYS = {"pilot_region": int, "guard_region": int, "delay_cells": float,
               "doppler_cells": float, "snr_db": float, "modes": str}


def _parse_value(name: str, text: str):
    text = text.strip()
    if name in _TUPLE_KEYS:
        if text.lower() in ("", "none", "default"):
            return None
        return tuple(_TUPLE_KEYS[name](v.strip()) for v in text.split(",") if v.strip())
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if kind in ("bool", bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    """Parse flat ``key = value`` text on top of ``base``."""
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, value)
    return replace(base, **updates).validate()


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


@dataclass
class ResultRow:
    mode: str
    snr_db: float
    trial: int
    seed: int
    detections: float
    misses: float
    false_alarms: float
    range_sq_err: float
    velocity_sq_err: float
    channel_rel_err: float
    bit_errors: int
    bit_count: int
    iterations: int
    converged: int
    solver_violations: int


@dataclass
class TrialData:
    """One synthesized frame with its ground truth."""

    paths: object
    bits: np.ndarray
    r: np.ndarray
    y: np.ndarray
    sigma2: float


def synthesize_trial(cfg: RunConfig, trial: int, snr_db: float) -> TrialData:
    """Draw targets, data and noise for ``trial``.

    The random stream depends only on ``(seed, trial)``; the noise realization
    is drawn at unit variance and scaled, so all SNRs share it.
    """
    grid, layout = cfg.grid, cfg.layout()
    con = Constellation.make(cfg.constellation)
    rng = trial_rng(cfg.seed, trial)
    spec = ScenarioSpec(P=cfg.P, delay_cells=cfg.delay_cells, doppler_cells=cfg.doppler_cells)
    paths = draw_paths(grid, spec, rng)
    bits = random_bits(rng, layout.n_data * con.bits_per_symbol)
    unit_noise = complex_normal(rng, grid.MN)
    s = modulate(grid, frame_vector(layout, con.bits_to_symbols(bits)))
    sigma2 = snr_to_sigma2(snr_db)
    r = apply_time_channel(grid, s, paths) + np.sqrt(sigma2) * unit_noise
    return TrialData(paths, bits, r, demodulate(grid, r), sigma2)


def run_mode(cfg: RunConfig, data: TrialData, mode: str, opts: Optional[IsacOptions] = None):
    """Run one receiver on a synthesized frame.

    Returns:
        ``(metrics, iterations, converged, solver_violations)``.
    """
    grid, layout = cfg.grid, cfg.layout()
    con = Constellation.make(cfg.constellation)
    H_true = effective_channel_from_paths(grid, data.paths).H
    m = TrialMetrics(bit_count=int(data.bits.size))
    iterations, converged, violations = 0, 1, 0
    if mode == "proposed":
        res = run(grid, layout, data.r, data.y, data.sigma2, con, opts or cfg.options())
        x_hat = res.x_data
        sens = sensing_metrics(data.paths, res.paths, grid)
        for k, v in sens.items():
            setattr(m, k, v)
        m.channel_rel_err = channel_rmse(H_true, res.H_eff.H)
        iterations, converged = res.iterations, int(res.converged)
        violations = res.solver_violations
    elif mode == "lmmse_modelfree":
        init = init_state(grid, layout, data.y, data.sigma2, con)
        x_hat = con.hard_decision(detect_data(init.H_hat.H, layout, data.y, data.sigma2))
        m.channel_rel_err = channel_rmse(H_true, init.H_hat.H)
    elif mode == "lmmse_perfect":
        x_hat = con.hard_decision(detect_data(H_true, layout, data.y, data.sigma2))
        m.channel_rel_err = 0.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    m.bit_errors = int(np.sum(con.symbols_to_bits(x_hat) != data.bits))
    return m, iterations, converged, violations


def run_trial(cfg: RunConfig, snr_db: float, trial: int):
    """All configured modes on one (snr, trial); returns rows and wall times."""
    data = synthesize_trial(cfg, trial, snr_db)
    rows, times = [], []
    for mode in cfg.modes:
        t0 = time.perf_counter()
        m, it, conv, viol = run_mode(cfg, data, mode)
        times.append((mode, snr_db, trial, time.perf_counter() - t0))
        rows.append(ResultRow(mode, float(snr_db), trial, cfg.seed, m.detections, m.misses,
                              m.false_alarms, m.range_sq_err, m.velocity_sq_err, m.channel_rel_err,
                              m.bit_errors, m.bit_count, it, conv, viol))
    return rows, times


def _task(args):
    cfg, snr, trial = args
    return run_trial(cfg, snr, trial)


def _sort_key(row: ResultRow):
    return (row.mode, row.snr_db, row.trial)


def run_sweep(cfg: RunConfig, workers: Optional[int] = None):
    """Run every (snr, trial) pair; returns rows sorted by (mode, snr, trial) and timings."""
    cfg.validate()
    tasks = [(cfg, float(snr), t) for snr in cfg.snr_db for t in range(cfg.trials)]
    n = cfg.workers if workers is None else workers
    if n <= 1:
        results = [_task(a) for a in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    rows = [r for rs, _ in results for r in rs]
    times = [t for _, ts in results for t in ts]
    rows.sort(key=_sort_key)
    times.sort()
    return rows, times


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Sequence[ResultRow], path: str):
    names = [f.name for f in fields(ResultRow)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in sorted(rows, key=_sort_key):
            w.writerow([_fmt(getattr(row, n)) for n in names])


def write_metadata(cfg: RunConfig, path: str, extra: Optional[dict] = None):
    meta = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "version": __version__,
        "snr_definition": SNR_NOTE,
        "channel_rel_err": "||H_est - H_true||_F / ||H_true||_F of the DD effective channel",
        "range_definition": "c * |delay error| (delay-equivalent path range)",
        "sensing_fields": "NaN for receivers that do not estimate targets",
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def summarize(rows: Sequence[ResultRow]) -> List[dict]:
    """Aggregate BER, Pd, false alarms and RMSEs per (mode, snr)."""
    groups = {}
    for r in rows:
        groups.setdefault((r.mode, r.snr_db), []).append(r)
    out = []
    for (mode, snr), rs in sorted(groups.items()):
        bits = sum(r.bit_count for r in rs)
        entry = dict(mode=mode, snr_db=snr, trials=len(rs),
                     ber=sum(r.bit_errors for r in rs) / bits if bits else float("nan"))
        det = np.array([r.detections for r in rs], float)
        if np.all(np.isfinite(det)):
            truths = det.sum() + sum(r.misses for r in rs)
            nd = det.sum()
            entry.update(pd=nd / truths if truths else float("nan"),
                         false_alarms=sum(r.false_alarms for r in rs),
                         range_rmse=np.sqrt(sum(r.range_sq_err for r in rs) / nd) if nd else float("nan"),
                         velocity_rmse=np.sqrt(sum(r.velocity_sq_err for r in rs) / nd) if nd else float("nan"))
        entry["channel_rel_err"] = float(np.mean([r.channel_rel_err for r in rs]))
        out.append(entry)
    return out


def convergence_trace(cfg: RunConfig, trials: Optional[int] = None):
    """Objective-versus-iteration rows for accelerated and ordinary runs on the same frames."""
    rows = []
    snr = float(cfg.snr_db[0])
    grid, layout = cfg.grid, cfg.layout()
    con = Constellation.make(cfg.constellation)
    for trial in range(cfg.trials if trials is None else trials):
        data = synthesize_trial(cfg, trial, snr)
        for label, acc in (("accelerated", True), ("ordinary", False)):
            res = run(grid, layout, data.r, data.y, data.sigma2, con, cfg.options(accelerated=acc))
            for tr in res.trace:
                rows.append(dict(variant=label, trial=trial, t=tr.t, objective=tr.objective,
                                 penalty_objective=tr.penalty_objective, dh=tr.dh, rho=tr.rho,
                                 tuples=tr.tuples))
    return rows


def iterations_to_plateau(objective: Sequence[float], rel: float = 0.01) -> int:
    """First iteration after which the objective stays within ``rel`` of its final value."""
    obj = np.asarray(objective, float)
    final = obj[-1]
    outside = np.abs(obj - final) > rel * abs(final)
    idx = np.nonzero(outside)[0]
    return int(idx[-1] + 1) if idx.size else 0


def selftest(verbose: bool = True) -> bool:
    """Run the module oracle checks at M=4, N=8; returns True when all pass."""
    from . import selfcheck

    results = selfcheck.run_all()
    if verbose:
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return all(ok for _, ok, _ in results)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    for f in fields(RunConfig):
        if f.name in ("out", "workers"):
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"opt_{f.name}", default=None,
                       metavar=f.name.upper())


def _load(args) -> RunConfig:
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read() + "\n"
    for f in fields(RunConfig):
        v = getattr(args, f"opt_{f.name}", None)
        if v is not None:
            text += f"{f.name} = {v}\n"
    text += "\n".join(args.set) + "\n"
    if getattr(args, "out", None):
        text += f"out = {args.out}\n"
    if getattr(args, "workers", None):
        text += f"workers = {args.workers}\n"
    return parse_config(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="zakisac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    ps = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    _add_common(ps)
    ps.add_argument("--out", default=None)
    ps.add_argument("--workers", type=int, default=None)
    pt = sub.add_parser("trace", help="accelerated vs ordinary convergence traces")
    _add_common(pt)
    pt.add_argument("--out", default=None)
    sub.add_parser("selftest", help="oracle self-checks at M=4, N=8")
    args = parser.parse_args(argv)

    if args.cmd == "selftest":
        return 0 if selftest() else 1
    try:
        cfg = _load(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.cmd == "sweep":
        rows, times = run_sweep(cfg)
        write_csv(rows, cfg.out)
        write_metadata(cfg, cfg.out + ".json",
                       {"wall_time_s": [dict(mode=m, snr_db=s, trial=t, seconds=round(d, 4))
                                        for m, s, t, d in times]})
        for entry in summarize(rows):
            print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in entry.items()))
        return 0
    rows = convergence_trace(cfg)
    out = args.out or "trace.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    write_metadata(cfg, out + ".json")
    for label in ("accelerated", "ordinary"):
        its = [iterations_to_plateau([r["objective"] for r in rows if r["variant"] == label and r["trial"] == t])
               for t in range(cfg.trials)]
        print(f"{label}: iterations to 1% plateau per trial = {its}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
