"""Single-excitation versus two-excitation fringes at equal velocity.

Writes both datasets and fits to --out and prints T, T' and their ratio.
"""

import argparse
import math
from pathlib import Path

from swnoon.cli import cmd_fringe
from swnoon.config import ExperimentConfig
from swnoon.dynamics import velocity_from_period


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--period-us", type=float, default=220.0, help="target first-order period")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base = ExperimentConfig(pump_power_mw=0.0)
    base = base.with_(v0_mps=velocity_from_period(args.period_us * 1e-6, base.motion()))
    _, first = cmd_fringe(base.with_(order=1), out)
    _, second = cmd_fringe(base.with_(order=2), out)
    ratio = first.period / second.period
    err = ratio * math.hypot(first.period_sigma / first.period, second.period_sigma / second.period)
    print(f"T/T' = {ratio:.3f} +- {err:.3f}")


if __name__ == "__main__":
    main()
