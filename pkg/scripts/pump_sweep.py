"""Fitted velocity versus pump power from the saturating pump model; writes pump_sweep.csv."""

import argparse
from pathlib import Path

from swnoon.cli import DEFAULT_POWERS, PUMP_HEADER, pump_sweep_rows
from swnoon.config import load
from swnoon.io import write_table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = load(None, args.set)
    rows = pump_sweep_rows(cfg, DEFAULT_POWERS)
    for r in rows:
        print(f"P={r[0]:5.2f} mW  v_c={r[1]:.4f}  v_hat={r[4]:.4f}+-{r[5]:.4f} m/s  {r[7]}")
    print(write_table(out / "pump_sweep.csv", PUMP_HEADER, rows))


if __name__ == "__main__":
    main()
