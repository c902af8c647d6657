"""Weighted nonlinear least-squares fits of the interference-fringe models.

First order (joint fit of the two herald conditions, shared a, T, phi0):

    f_{+|+}(t) = (0.5 + a cos^2(pi t / T + phi0) E(t)) / (1 + a E(t))
    f_{+|-}(t) = (0.5 + a sin^2(pi t / T + phi0) E(t)) / (1 + a E(t))

Second order:

    c(t) = b sin^2(pi t / T' + phi0') E(t)^2 + d E(t)

with E(t) = exp(-t^2 / tau^2) and tau held fixed unless ``fit_tau`` is set.
Internally times are in microseconds; public parameters are SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .streams import STREAM_FIT, derive_rng

WEIGHT_FLOOR = 1e-6
# Jeffreys-style shrinkage of the observed rate used only inside the weights
PSEUDO_COUNT = 0.5
US = 1e-6

FIRST_ORDER = "joint-first-order"
SECOND_ORDER = "second-order"

PARAM_NAMES = {
    FIRST_ORDER: ("a", "T", "phi0"),
    SECOND_ORDER: ("b", "d", "T_prime", "phi0_prime"),
}


class NoFringeError(ValueError):
    """Data carry no oscillation to fit."""


# -- data ---------------------------------------------------------------------------------


@dataclass
class FringeSeries:
    """``k`` events out of ``n`` at each delay ``dt`` (seconds); k may be fractional for synthetic data."""

    dt: np.ndarray
    k: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        self.dt = np.asarray(self.dt, dtype=float)
        self.k = np.asarray(self.k, dtype=float)
        self.n = np.asarray(self.n, dtype=float)
        if not (self.dt.shape == self.k.shape == self.n.shape):
            raise ValueError("dt, k and n must have the same shape")

    @classmethod
    def from_values(cls, dt, values, n=1.0) -> "FringeSeries":
        values = np.asarray(values, dtype=float)
        n = np.broadcast_to(np.asarray(n, dtype=float), values.shape).copy()
        return cls(dt, values * n, n)

    @property
    def valid(self) -> np.ndarray:
        return self.n > 0

    @property
    def value(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.n > 0, self.k / np.where(self.n > 0, self.n, 1), np.nan)

    def weights(self, floor: float = WEIGHT_FLOOR, pseudo: float = PSEUDO_COUNT) -> np.ndarray:
        """Binomial inverse variances n / (f (1 - f) + floor).

        f is the shrunk rate (k + pseudo) / (n + 2 pseudo); with ``pseudo=0``
        empty bins get weight n / floor and pin the fit to zero.
        """
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.nan_to_num((self.k + pseudo) / (self.n + 2 * pseudo))
        return np.where(self.valid, self.n / (f * (1 - f) + floor), 0.0)

    def sigma(self) -> np.ndarray:
        f = np.nan_to_num(self.value)
        with np.errstate(divide="ignore"):
            return np.where(self.valid, np.sqrt(f * (1 - f) / np.where(self.valid, self.n, 1)), np.inf)


def first_order_series(ds) -> Tuple[FringeSeries, FringeSeries]:
    """(f_{+|+}, f_{+|-}) series: D_AS1 share of anti-Stokes clicks per herald condition."""
    out = []
    for tag in ("plus", "minus"):
        as1 = ds.channels[f"{tag}_as1"]
        out.append(FringeSeries(ds.dt, as1, as1 + ds.channels[f"{tag}_as2"]))
    return out[0], out[1]


def second_order_series(ds) -> FringeSeries:
    """Coincidences per successful heralded run."""
    n = ds.trials - ds.channels.get("timeouts", 0)
    return FringeSeries(ds.dt, ds.channels["coinc"], n)


# -- models ----------------------------------------------------------------------------------


def eval_first_order(params: Sequence[float], dt, tau: float):
    """Return (f_{+|+}, f_{+|-}) for params (a, T, phi0); dt, T and tau in the same unit."""
    a, period, phi0 = params[:3]
    dt = np.asarray(dt, dtype=float)
    env = np.exp(-(dt**2) / tau**2)
    x = np.pi * dt / period + phi0
    den = 1 + a * env
    return (0.5 + a * np.cos(x) ** 2 * env) / den, (0.5 + a * np.sin(x) ** 2 * env) / den


def eval_first_order_complement(params: Sequence[float], dt, tau: float):
    """f_{-|+}: share on |-> under the same |+> conditioning, so that f_{+|+} + f_{-|+} = 1."""
    a, period, phi0 = params[:3]
    dt = np.asarray(dt, dtype=float)
    env = np.exp(-(dt**2) / tau**2)
    return (0.5 + a * np.sin(np.pi * dt / period + phi0) ** 2 * env) / (1 + a * env)


def eval_second_order(params: Sequence[float], dt, tau: float):
    b, d, period, phi0 = params[:4]
    dt = np.asarray(dt, dtype=float)
    env = np.exp(-(dt**2) / tau**2)
    return b * np.sin(np.pi * dt / period + phi0) ** 2 * env**2 + d * env


# -- solver ----------------------------------------------------------------------------------


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jac: np.ndarray
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def _jacobian(fun, x, r0, scale):
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = 1e-6 * max(abs(x[j]), scale[j])
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (fun(xp) - fun(xm)) / (2 * h)
    return jac


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    lower,
    upper,
    scale=None,
    max_iter: int = 200,
    xtol: float = 1e-8,
) -> LMResult:
    """Damped Gauss-Newton with Marquardt's diagonal scaling and bound clipping.

    A step is accepted only if it does not raise the residual sum of squares;
    otherwise the damping grows tenfold.  Stops when the relative step drops
    below ``xtol`` or after ``max_iter`` accepted/rejected rounds.
    """
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    scale = np.ones_like(x) if scale is None else np.asarray(scale, float)
    r = fun(x)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    it = 0
    jac = _jacobian(fun, x, r, scale)
    while it < max_iter:
        it += 1
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        # variables pinned at a bound with the descent direction pointing outward stay put
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        step = np.zeros_like(x)
        try:
            sub = np.ix_(free, free)
            step[free] = np.linalg.solve(a[sub] + lam * np.diag(diag[free]), -g[free])
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        x_new = np.clip(x + step, lower, upper)
        r_new = fun(x_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            rel = np.max(np.abs(x_new - x) / np.maximum(np.abs(x), scale))
            x, r, cost = x_new, r_new, cost_new
            history.append(cost)
            lam = max(lam / 10, 1e-15)
            if rel < xtol or cost == 0.0:
                converged = True
                break
            jac = _jacobian(fun, x, r, scale)
        else:
            lam *= 10
            if lam > 1e16:
                # no downhill step exists at this resolution: a stationary point
                converged = True
                break
    jac = _jacobian(fun, x, r, scale)
    return LMResult(x, cost, jac, it, converged, history)


# -- results ---------------------------------------------------------------------------------


@dataclass
class FitResult:
    kind: str
    params: Dict[str, Tuple[float, float]]
    rss: float
    converged: bool
    iterations: int
    tau: float
    # series name -> rows of (dt s, observed, model)
    residuals: Dict[str, np.ndarray] = field(default_factory=dict)
    history: List[float] = field(default_factory=list)
    dof: int = 0

    def value(self, name: str) -> float:
        return self.params[name][0]

    def sigma(self, name: str) -> float:
        return self.params[name][1]

    @property
    def period(self) -> float:
        return self.value("T" if self.kind == FIRST_ORDER else "T_prime")

    @property
    def period_sigma(self) -> float:
        return self.sigma("T" if self.kind == FIRST_ORDER else "T_prime")

    def vector(self) -> np.ndarray:
        return np.array([self.params[n][0] for n in PARAM_NAMES[self.kind]])

    def residual_rows(self) -> List[Tuple[str, float, float, float, float]]:
        """(series, dt s, observed, model, observed - model) for every fitted point."""
        rows = []
        for name, table in self.residuals.items():
            for dt, obs, mod in table:
                rows.append((name, float(dt), float(obs), float(mod), float(obs - mod)))
        return rows

    def to_text(self) -> str:
        lines = [f"kind = {self.kind}", f"tau = {self.tau:.17g}"]
        for name, (v, s) in self.params.items():
            lines.append(f"{name} = {v:.17g} ± {s:.17g}")
        lines += [
            f"rss = {self.rss:.17g}",
            f"dof = {self.dof}",
            f"converged = {str(self.converged).lower()}",
            f"iterations = {self.iterations}",
        ]
        return "\n".join(lines) + "\n"

    def csv_header(self) -> List[str]:
        cols = ["kind"]
        for name in self.params:
            cols += [name, f"{name}_sigma"]
        return cols + ["rss", "converged", "iterations"]

    def csv_row(self) -> List[str]:
        row = [self.kind]
        for v, s in self.params.values():
            row += [f"{v:.17g}", f"{s:.17g}"]
        return row + [f"{self.rss:.17g}", str(int(self.converged)), str(self.iterations)]


def parse_fit_text(text: str) -> Dict[str, Tuple[float, float]]:
    """Read back the ``name = value ± sigma`` lines of :meth:`FitResult.to_text`."""
    out = {}
    for line in text.splitlines():
        key, sep, rest = line.partition(" = ")
        if sep and "±" in rest:
            v, s = rest.split("±")
            out[key.strip()] = (float(v), float(s))
    return out


# -- initial guesses ---------------------------------------------------------------------------


def period_bounds(dt_us: np.ndarray) -> Tuple[float, float]:
    """Period search window [2 x grid spacing, 4 x grid span]."""
    span = float(dt_us.max() - dt_us.min())
    spacing = float(np.median(np.diff(np.unique(dt_us)))) if dt_us.size > 1 else span
    if span <= 0:
        raise NoFringeError("need at least two distinct delays")
    return 2 * spacing, 4 * span


def _periodogram_peak(t: np.ndarray, y: np.ndarray, w: np.ndarray, tmin: float, tmax: float):
    """Dominant nonzero frequency of a weighted direct DFT; returns (period, complex amplitude)."""
    freqs = np.linspace(1 / tmax, 1 / tmin, 2000)
    ws = w / w.sum()
    spec = np.exp(-2j * np.pi * np.outer(freqs, t)) @ (ws * y)
    k = int(np.argmax(np.abs(spec)))
    return 1 / freqs[k], spec[k]


def _check_data(series: Sequence[FringeSeries], min_points: int):
    total = sum(int(s.valid.sum()) for s in series)
    if total < min_points:
        raise ValueError(f"need at least {min_points} usable points, got {total}")
    values = np.concatenate([s.value[s.valid] for s in series])
    if np.ptp(values) < 1e-12:
        raise NoFringeError("all observed values are equal")


def init_guess(data, kind: str, tau: Optional[float] = None) -> np.ndarray:
    """Periodogram-based starting point, in public (SI) units.

    ``data`` is a (plus, minus) pair for the first-order model or a single
    series for the second-order one.
    """
    if kind == FIRST_ORDER:
        plus, minus = data
        _check_data((plus, minus), 4)
        ok = plus.valid & minus.valid
        t = plus.dt[ok] / US
        y = plus.value[ok] - minus.value[ok]
        if tau is not None:
            y = y * np.exp(t**2 / (tau / US) ** 2)
        y = y - y.mean()
        tmin, tmax = period_bounds(t)
        period, amp = _periodogram_peak(t, y, np.ones_like(t), tmin, tmax)
        # y ~ A cos(2 pi t / T + 2 phi0) so the DFT phase is 2 phi0
        phi0 = _wrap(np.angle(amp) / 2)
        contrast = min(float(np.max(np.abs(plus.value[ok] - minus.value[ok]))), 0.999)
        a = max(contrast / (1 - contrast), 1e-3)
        return np.array([a, period * US, phi0])
    if kind == SECOND_ORDER:
        series = data
        _check_data((series,), 4)
        ok = series.valid
        t = series.dt[ok] / US
        y = series.value[ok]
        tmin, tmax = period_bounds(t)
        flat = y * np.exp(2 * t**2 / (tau / US) ** 2) if tau is not None else y
        period, amp = _periodogram_peak(t, flat - flat.mean(), np.ones_like(t), tmin, tmax)
        # sin^2(x) = (1 - cos 2x) / 2 so the DFT phase is 2 phi0' + pi
        phi0 = _wrap((np.angle(amp) - np.pi) / 2)
        b = max(float(np.ptp(y)), 1e-12)
        d = max(float(np.min(y[: max(2, len(y) // 4)])), 0.0)
        return np.array([b, d, period * US, phi0])
    raise ValueError(f"unknown model kind {kind!r}")


def _wrap(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


# -- fits ---------------------------------------------------------------------------------------


def _scan_first_order(t, yp, wp, ym, wm, tau_us, a0, tmin, tmax):
    periods = np.geomspace(tmin, tmax, 120)
    phis = np.linspace(-np.pi / 2, np.pi / 2, 24, endpoint=False)
    best = (np.inf, None)
    env = np.exp(-(t**2) / tau_us**2)
    for a in (a0 / 4, a0, a0 * 4):
        x = np.pi * t[None, None, :] / periods[:, None, None] + phis[None, :, None]
        den = 1 + a * env
        fp = (0.5 + a * np.cos(x) ** 2 * env) / den
        fm = (0.5 + a * np.sin(x) ** 2 * env) / den
        cost = np.sum(wp * (fp - yp) ** 2, axis=-1) + np.sum(wm * (fm - ym) ** 2, axis=-1)
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        if cost[i, j] < best[0]:
            best = (cost[i, j], np.array([a, periods[i], phis[j]]))
    return best[1]


def _scan_second_order(t, y, w, tau_us, tmin, tmax):
    periods = np.geomspace(tmin, tmax, 120)
    phis = np.linspace(-np.pi / 2, np.pi / 2, 24, endpoint=False)
    env = np.exp(-(t**2) / tau_us**2)
    best = (np.inf, None)
    sw = np.sqrt(w)
    for period in periods:
        for phi in phis:
            basis = np.stack([np.sin(np.pi * t / period + phi) ** 2 * env**2, env], axis=1)
            coef, *_ = np.linalg.lstsq(basis * sw[:, None], y * sw, rcond=None)
            coef = np.maximum(coef, [1e-12, 0.0])
            cost = float(np.sum(w * (basis @ coef - y) ** 2))
            if cost < best[0]:
                best = (cost, np.array([coef[0], coef[1], period, phi]))
    return best[1]


def _jitter(x0, k_period, k_phase, rng):
    x = x0.copy()
    x[k_period] *= 1 + 0.2 * rng.uniform(-1, 1)
    x[k_phase] += rng.uniform(-np.pi / 4, np.pi / 4)
    return x


def _run_starts(fun, starts, lower, upper, scale):
    best = None
    for i, x0 in enumerate(starts):
        res = levenberg_marquardt(fun, x0, lower, upper, scale)
        # strict improvement keeps the lower index on ties
        if best is None or res.cost < best.cost:
            best = res
    return best


def _covariance(jac: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(jac.T @ jac)


def fit_first_order(
    plus: FringeSeries,
    minus: FringeSeries,
    tau: float,
    init: Optional[Sequence[float]] = None,
    restarts: int = 5,
    seed: int = 0,
    fit_tau: bool = False,
) -> FitResult:
    """Joint weighted fit of f_{+|+} and f_{+|-} with shared (a, T, phi0)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    _check_data((plus, minus), 6)
    t_p, t_m = plus.dt[plus.valid] / US, minus.dt[minus.valid] / US
    yp, ym = plus.value[plus.valid], minus.value[minus.valid]
    wp, wm = plus.weights()[plus.valid], minus.weights()[minus.valid]
    sp, sm = np.sqrt(wp), np.sqrt(wm)
    tau_us = tau / US
    tmin, tmax = period_bounds(np.concatenate([t_p, t_m]))

    def model(x, t, which):
        return eval_first_order(x[:3], t, x[3] if fit_tau else tau_us)[which]

    def residual(x):
        return np.concatenate([sp * (model(x, t_p, 0) - yp), sm * (model(x, t_m, 1) - ym)])

    guess = init_guess((plus, minus), FIRST_ORDER, tau) if init is None else np.asarray(init, float)
    guess = np.array([guess[0], guess[1] / US, guess[2]])
    guess[1] = np.clip(guess[1], tmin, tmax)
    rng = derive_rng(seed, STREAM_FIT, 1)
    starts = [guess] + [_jitter(guess, 1, 2, rng) for _ in range(restarts - 1)]
    if init is None:
        starts.append(_scan_first_order(t_p, yp, wp, *_align(t_p, t_m, ym, wm), tau_us, guess[0], tmin, tmax))
    lower, upper = [1e-9, tmin, -np.inf], [1e9, tmax, np.inf]
    scale = [1.0, tmax, 1.0]
    if fit_tau:
        starts = [np.append(s, tau_us) for s in starts]
        lower, upper, scale = lower + [1e-3 * tau_us], upper + [1e3 * tau_us], scale + [tau_us]
    res = _run_starts(residual, starts, lower, upper, scale)
    cov = _covariance(res.jac)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    x = res.x
    params = {
        "a": (float(x[0]), float(err[0])),
        "T": (float(x[1] * US), float(err[1] * US)),
        "phi0": (float(_wrap(x[2])), float(err[2])),
    }
    fit_tau_s = float(x[3] * US) if fit_tau else tau
    if fit_tau:
        params["tau"] = (fit_tau_s, float(err[3] * US))
    return FitResult(
        FIRST_ORDER,
        params,
        res.cost,
        res.converged,
        res.iterations,
        fit_tau_s,
        residuals={
            "plus": np.column_stack([t_p * US, yp, model(x, t_p, 0)]),
            "minus": np.column_stack([t_m * US, ym, model(x, t_m, 1)]),
        },
        history=res.history,
        dof=len(yp) + len(ym) - len(x),
    )


def _align(t_p, t_m, ym, wm):
    # the scan evaluates both curves on the plus grid; fall back to zero weight off-grid
    if t_p.shape == t_m.shape and np.allclose(t_p, t_m):
        return ym, wm
    y = np.interp(t_p, t_m, ym)
    return y, np.zeros_like(t_p) + np.median(wm)


def fit_second_order(
    series: FringeSeries,
    tau: float,
    init: Optional[Sequence[float]] = None,
    restarts: int = 5,
    seed: int = 0,
    fit_tau: bool = False,
) -> FitResult:
    """Weighted fit of c(t) = b sin^2(pi t / T' + phi0') E^2 + d E."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    _check_data((series,), 5)
    ok = series.valid
    t, y, w = series.dt[ok] / US, series.value[ok], series.weights()[ok]
    sw = np.sqrt(w)
    tau_us = tau / US
    tmin, tmax = period_bounds(t)

    def model(x):
        return eval_second_order(x[:4], t, x[4] if fit_tau else tau_us)

    def residual(x):
        return sw * (model(x) - y)

    guess = init_guess(series, SECOND_ORDER, tau) if init is None else np.asarray(init, float)
    guess = np.array([guess[0], guess[1], guess[2] / US, guess[3]])
    guess[2] = np.clip(guess[2], tmin, tmax)
    rng = derive_rng(seed, STREAM_FIT, 2)
    starts = [guess] + [_jitter(guess, 2, 3, rng) for _ in range(restarts - 1)]
    if init is None:
        starts.append(_scan_second_order(t, y, w, tau_us, tmin, tmax))
    ymax = max(float(np.max(np.abs(y))), 1e-12)
    lower, upper = [1e-15, 0.0, tmin, -np.inf], [np.inf, np.inf, tmax, np.inf]
    scale = [ymax, ymax, tmax, 1.0]
    if fit_tau:
        starts = [np.append(s, tau_us) for s in starts]
        lower, upper, scale = lower + [1e-3 * tau_us], upper + [1e3 * tau_us], scale + [tau_us]
    res = _run_starts(residual, starts, lower, upper, scale)
    cov = _covariance(res.jac)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    x = res.x
    params = {
        "b": (float(x[0]), float(err[0])),
        "d": (float(x[1]), float(err[1])),
        "T_prime": (float(x[2] * US), float(err[2] * US)),
        "phi0_prime": (float(_wrap(x[3])), float(err[3])),
    }
    fit_tau_s = float(x[4] * US) if fit_tau else tau
    if fit_tau:
        params["tau"] = (fit_tau_s, float(err[4] * US))
    return FitResult(
        SECOND_ORDER,
        params,
        res.cost,
        res.converged,
        res.iterations,
        fit_tau_s,
        residuals={"coinc": np.column_stack([t * US, y, model(x)])},
        history=res.history,
        dof=len(y) - len(x),
    )


def fit_dataset(ds, tau: float, order: Optional[int] = None, restarts: int = 5, seed: int = 0, fit_tau=False):
    """Fit the model matching the dataset's order (read from its metadata when not given)."""
    order = int(ds.metadata.get("order", 1)) if order is None else order
    if order == 1:
        plus, minus = first_order_series(ds)
        return fit_first_order(plus, minus, tau, restarts=restarts, seed=seed, fit_tau=fit_tau)
    if order == 2:
        return fit_second_order(second_order_series(ds), tau, restarts=restarts, seed=seed, fit_tau=fit_tau)
    raise ValueError(f"order must be 1 or 2, got {order}")
