"""Batch commands: ``swnoon <command> --config cfg.json [--set k=v]... [--out dir]``.

Exit status 0 on success, 2 for configuration problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import config as config_mod
from .config import ConfigError, ExperimentConfig
from .detection import acquire_fringe, prepare_heralds
from .dynamics import GhzSpec, NoFringe, ghz_period, period_from_velocity, velocity_from_period
from .fitting import NoFringeError, fit_dataset
from .fock import dumps
from .herald import ImpossibleOutcome, herald_probability_scaling, write_state
from .io import write_dataset, write_table
from .optics import noon_network, stokes_analyzer
from .streams import STREAM_SWEEP, derive_seed

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
MAX_TIMEOUT_RATE = 0.5
DEFAULT_POWERS = (0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)


class RuntimeFailure(RuntimeError):
    """A run that started but could not produce its outputs."""


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -------------------------------------------------------------------------


def cmd_herald_stats(cfg: ExperimentConfig, out: Path) -> Path:
    n_max = min(4, cfg.cutoff)
    rows = []
    for n, p in herald_probability_scaling(cfg.chi, n_max, cutoff=max(cfg.cutoff, n_max)):
        rows.append([n, cfg.chi, p, math.log(p) if p > 0 else -math.inf, 1 / p if p > 0 else math.inf])
    path = write_table(out / "herald_stats.csv", ["N", "chi", "probability", "log_probability", "mean_attempts"], rows)
    logs = [r[3] for r in rows]
    if len(rows) > 1 and all(math.isfinite(v) for v in logs):
        slope = float(np.polyfit([r[0] for r in rows], logs, 1)[0])
        print(f"log-probability slope {slope:.6f} (ln chi = {math.log(cfg.chi):.6f})")
    return path


def check_timeouts(ds, limit: float = MAX_TIMEOUT_RATE) -> None:
    for name, counts in ds.channels.items():
        if not name.endswith("timeouts"):
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            rate = np.where(ds.trials > 0, counts / np.maximum(ds.trials, 1), 0.0)
        bad = np.flatnonzero(rate > limit)
        if bad.size:
            i = int(bad[0])
            raise RuntimeFailure(
                f"herald timeout rate {rate[i]:.3f} > {limit} at dt={ds.dt[i] * 1e6:.3f} us ({name}); "
                f"raise max_attempts or chi"
            )


def cmd_fringe(cfg: ExperimentConfig, out: Path):
    ds = acquire_fringe(cfg)
    check_timeouts(ds)
    stem = f"fringe_order{cfg.order}"
    write_dataset(out / f"{stem}.csv", ds)
    try:
        fit = fit_dataset(ds, cfg.tau_s, cfg.order, restarts=cfg.fit_restarts, seed=cfg.seed, fit_tau=cfg.fit_tau)
    except NoFringeError as exc:
        raise RuntimeFailure(f"fit failed: {exc}") from None
    (out / f"{stem}_fit.txt").write_text(fit.to_text())
    write_table(out / f"{stem}_fit.csv", fit.csv_header(), [fit.csv_row()])
    write_table(out / f"{stem}_residuals.csv", ["series", "dt_s", "observed", "model", "residual"], fit.residual_rows())
    label = "T" if cfg.order == 1 else "T_prime"
    print(f"{label} = {fit.period * 1e6:.3f} +- {fit.period_sigma * 1e6:.3f} us (converged={fit.converged})")
    return ds, fit


PUMP_HEADER = ["power_mw", "v_c_mps", "T_s", "T_sigma_s", "v_hat_mps", "v_hat_sigma_mps", "converged", "status"]


def pump_sweep_rows(cfg: ExperimentConfig, powers: Sequence[float]) -> List[list]:
    """One order-1 scan and fit per power; failures are recorded, not raised."""
    motion = cfg.motion()
    rows = []
    for i, power in enumerate(powers):
        run = cfg.with_(pump_power_mw=float(power), order=1, seed=derive_seed(cfg.seed, STREAM_SWEEP, i))
        try:
            ds = acquire_fringe(run)
            check_timeouts(ds)
            fit = fit_dataset(ds, run.tau_s, 1, restarts=run.fit_restarts, seed=run.seed, fit_tau=run.fit_tau)
            T, dT = fit.period, fit.period_sigma
            v = velocity_from_period(T, motion)
            rows.append([float(power), run.v_c, T, dT, v, v * dT / T, fit.converged, "ok"])
        except (RuntimeFailure, NoFringeError, NoFringe, ValueError) as exc:
            nan = float("nan")
            rows.append([float(power), run.v_c, nan, nan, nan, nan, False, f"failed: {exc}"])
    return rows


def cmd_pump_sweep(cfg: ExperimentConfig, out: Path, powers: Sequence[float]) -> Path:
    rows = pump_sweep_rows(cfg, powers)
    for r in rows:
        print(f"P={r[0]:g} mW  v_hat={r[4]:.4f} m/s  {r[7]}")
    return write_table(out / "pump_sweep.csv", PUMP_HEADER, rows)


def cmd_ghz_table(cfg: ExperimentConfig, out: Path, n_max: int) -> Path:
    if n_max < 1:
        raise ConfigError([f"--n-max: must be >= 1, got {n_max}"])
    motion = cfg.motion()
    base = ghz_period(GhzSpec(1))
    t1 = period_from_velocity(cfg.v_c, motion) if cfg.v_c > 0 else math.inf
    rows = []
    for n in range(1, n_max + 1):
        p = ghz_period(GhzSpec(n))
        rows.append([n, p, p / base, t1 * p / base])
    return write_table(out / "ghz_table.csv", ["N", "period_dphi", "period_ratio", "period_s"], rows)


def cmd_dump_state(cfg: ExperimentConfig, out: Path) -> List[Path]:
    state = write_state(cfg.write_params())
    paths = [out / "state_write.txt"]
    paths[0].write_text(dumps(state))
    for name, res in prepare_heralds(cfg, cfg.order).items():
        path = out / f"state_herald_{name}.txt"
        head, _, body = dumps(res.state).partition("\n")
        path.write_text(f"{head}\tprobability={res.probability:.17g}\tbranches={len(res.branches)}\n{body}")
        paths.append(path)
    return paths


def cmd_dump_network(cfg: ExperimentConfig, out: Path) -> List[Path]:
    paths = []
    for net in (stokes_analyzer(), noon_network(cfg.noon_N)):
        path = out / f"network_{net.name}.txt"
        path.write_text(net.describe())
        paths.append(path)
    return paths


# -- entry point ------------------------------------------------------------------------


def _powers(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError([f"--powers: expected comma-separated numbers, got {text!r}"]) from None
    if not values or any(v < 0 or not math.isfinite(v) for v in values):
        raise ConfigError([f"--powers: need non-negative finite powers, got {text!r}"])
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swnoon", description="Spin-wave NOON-state interferometry simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults used when omitted)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    common.add_argument("--out", default=".", help="output directory")
    sub.add_parser("herald-stats", parents=[common], help="herald probability versus N")
    sub.add_parser("fringe", parents=[common], help="simulate and fit one delay scan")
    sweep = sub.add_parser("pump-sweep", parents=[common], help="fitted velocity versus pump power")
    sweep.add_argument("--powers", default=",".join(f"{p:g}" for p in DEFAULT_POWERS), help="comma-separated mW")
    ghz = sub.add_parser("ghz-table", parents=[common], help="analytic GHZ fringe periods")
    ghz.add_argument("--n-max", type=int, default=4)
    sub.add_parser("dump-state", parents=[common], help="write and heralded Fock states")
    sub.add_parser("dump-network", parents=[common], help="detection network matrices")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config, args.set)
        out = _out(args)
        if args.command == "herald-stats":
            cmd_herald_stats(cfg, out)
        elif args.command == "fringe":
            cmd_fringe(cfg, out)
        elif args.command == "pump-sweep":
            cmd_pump_sweep(cfg, out, _powers(args.powers))
        elif args.command == "ghz-table":
            cmd_ghz_table(cfg, out, args.n_max)
        elif args.command == "dump-state":
            cmd_dump_state(cfg, out)
        elif args.command == "dump-network":
            cmd_dump_network(cfg, out)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, ImpossibleOutcome, NoFringe, NoFringeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
