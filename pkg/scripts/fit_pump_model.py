"""Fit the saturation power of v_c(P) = v0 + v_max (1 - exp(-P / P_sat)) to the measured periods.

v0 and v_max stay at their nominal values (0.03 and 0.09 m/s); a second fit frees all three.
"""

import numpy as np

from swnoon.fitting import levenberg_marquardt

from period_table import MEASURED, ROUNDED_DELTA_K


def main():
    power = np.array([c[0] for c in MEASURED])
    period = np.array([c[1] for c in MEASURED]) * 1e-6
    period_sigma = np.array([c[2] for c in MEASURED]) * 1e-6
    v = np.pi / (ROUNDED_DELTA_K * period)
    v_sigma = v * period_sigma / period

    def fixed(x):
        return (0.03 + 0.09 * (1 - np.exp(-power / x[0])) - v) / v_sigma

    def free(x):
        return (x[0] + x[1] * (1 - np.exp(-power / x[2])) - v) / v_sigma

    one = levenberg_marquardt(fixed, [1.0], [1e-3], [100.0])
    print(f"P_sat = {one.x[0]:.3f} mW (v0, v_max fixed), chi2 = {one.cost:.2f} for {len(v) - 1} dof")
    three = levenberg_marquardt(free, [0.03, 0.09, 1.0], [0.0, 0.0, 1e-3], [1.0, 1.0, 100.0])
    v0, v_max, p_sat = three.x
    print(f"v0 = {v0:.4f} m/s, v_max = {v_max:.4f} m/s, P_sat = {p_sat:.3f} mW (all free), chi2 = {three.cost:.2f}")


if __name__ == "__main__":
    main()
