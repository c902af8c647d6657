import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from swnoon.fitting import (
    FIRST_ORDER,
    SECOND_ORDER,
    FringeSeries,
    NoFringeError,
    eval_first_order,
    eval_second_order,
    fit_first_order,
    fit_second_order,
    init_guess,
    levenberg_marquardt,
    parse_fit_text,
    period_bounds,
)

TAU = 800e-6
GRID = np.linspace(0, 700e-6, 36)


def first_order_data(a, period, phi0, n=1e4, rng=None, grid=GRID, tau=TAU):
    fp, fm = eval_first_order((a, period, phi0), grid, tau)
    if rng is None:
        return FringeSeries.from_values(grid, fp, n), FringeSeries.from_values(grid, fm, n)
    n = int(n)
    return FringeSeries(grid, rng.binomial(n, fp), np.full(grid.shape, n)), FringeSeries(
        grid, rng.binomial(n, fm), np.full(grid.shape, n)
    )


def second_order_data(b, d, period, phi0, n=1e5, rng=None, grid=GRID, tau=TAU):
    c = eval_second_order((b, d, period, phi0), grid, tau)
    if rng is None:
        return FringeSeries.from_values(grid, c, n)
    return FringeSeries(grid, rng.binomial(int(n), c), np.full(grid.shape, int(n)))


def phase_distance(x, y, period=math.pi):
    d = (x - y) % period
    return min(d, period - d)


# -- models ---------------------------------------------------------------------------------


def test_first_order_model_limits():
    fp, fm = eval_first_order((20, 317e-6, 0.0), 0.0, TAU)
    assert fp == pytest.approx(20.5 / 21)
    assert fm == pytest.approx(0.5 / 21)
    fp, fm = eval_first_order((20, 317e-6, 0.0), 1.0, TAU)
    assert fp == pytest.approx(0.5) and fm == pytest.approx(0.5)


def test_second_order_model_limits():
    assert eval_second_order((0.01, 1e-4, 160e-6, math.pi / 2), 0.0, TAU) == pytest.approx(0.0101)
    assert eval_second_order((0.01, 1e-4, 160e-6, 0.3), 1.0, TAU) == pytest.approx(0.0)


# -- solver ---------------------------------------------------------------------------------


def rosenbrock(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def test_lm_rosenbrock():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], [-np.inf] * 2, [np.inf] * 2)
    assert res.converged
    assert res.x == pytest.approx([1, 1], abs=1e-6)


def test_lm_history_monotone():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], [-np.inf] * 2, [np.inf] * 2)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 2.0))
@settings(max_examples=25)
def test_lm_matches_scipy_on_exponential(a0, b0, rate):
    t = np.linspace(0, 3, 25)
    y = 1.7 * np.exp(-rate * t) + 0.05 * np.sin(7 * t)

    def fun(x):
        return x[0] * np.exp(-x[1] * t) - y

    ours = levenberg_marquardt(fun, [1.0 + abs(a0), 1.0], [-10, 0.01], [10, 10])
    ref = least_squares(fun, [1.0 + abs(a0), 1.0], bounds=([-10, 0.01], [10, 10]), xtol=1e-12, ftol=1e-12)
    assert ours.cost == pytest.approx(2 * ref.cost, rel=1e-6, abs=1e-12)


def test_lm_respects_bounds():
    # unconstrained minimum at x = -1, lower bound at 0
    res = levenberg_marquardt(lambda x: np.array([x[0] + 1.0]), [2.0], [0.0], [5.0])
    assert res.x[0] == 0.0
    assert res.converged


# -- initial guesses ------------------------------------------------------------------------


def test_period_bounds():
    lo, hi = period_bounds(np.linspace(0, 700, 36))
    assert lo == pytest.approx(40)
    assert hi == pytest.approx(2800)
    with pytest.raises(NoFringeError):
        period_bounds(np.array([5.0]))


@given(st.floats(60e-6, 350e-6), st.floats(-1.5, 1.5))
@settings(max_examples=25)
def test_init_guess_period_near_truth(period, phi0):
    # pure sinusoid with at least two cycles inside the window
    wave = 0.5 + 0.4 * np.cos(2 * np.pi * GRID / period + 2 * phi0)
    plus = FringeSeries.from_values(GRID, wave, 1000)
    minus = FringeSeries.from_values(GRID, 1 - wave, 1000)
    guess = init_guess((plus, minus), FIRST_ORDER)
    assert guess[1] == pytest.approx(period, rel=0.2)
    lo, hi = period_bounds(GRID / 1e-6)
    assert lo * 1e-6 <= guess[1] <= hi * 1e-6


def test_init_guess_second_order():
    s = second_order_data(0.02, 1e-4, 160e-6, 0.4, tau=1.0)
    guess = init_guess(s, SECOND_ORDER)
    assert guess[2] == pytest.approx(160e-6, rel=0.2)


def test_init_guess_rejects_constant():
    flat = FringeSeries.from_values(GRID, np.full(GRID.shape, 0.5), 100)
    with pytest.raises(NoFringeError):
        init_guess((flat, flat), FIRST_ORDER)
    with pytest.raises(ValueError):
        init_guess(flat, "third-order")


# -- fits ------------------------------------------------------------------------------------


@pytest.mark.parametrize("a,period,phi0", [(20, 317e-6, 0.0), (5, 555e-6, 0.7), (50, 1177e-6, -0.3)])
def test_first_order_noise_free_recovery(a, period, phi0):
    plus, minus = first_order_data(a, period, phi0, grid=np.linspace(0, 1500e-6, 61))
    fit = fit_first_order(plus, minus, TAU)
    assert fit.converged
    assert fit.value("a") == pytest.approx(a, rel=1e-6)
    assert fit.period == pytest.approx(period, rel=1e-6)
    assert phase_distance(fit.value("phi0"), phi0) < 1e-6
    assert fit.rss < 1e-12


@pytest.mark.parametrize("b,d,period,phi0", [(0.02, 3e-4, 160e-6, 1.3), (0.005, 1e-4, 300e-6, -0.4)])
def test_second_order_noise_free_recovery(b, d, period, phi0):
    s = second_order_data(b, d, period, phi0)
    fit = fit_second_order(s, TAU)
    assert fit.converged
    assert fit.value("b") == pytest.approx(b, rel=1e-6)
    assert fit.value("d") == pytest.approx(d, rel=1e-6)
    assert fit.period == pytest.approx(period, rel=1e-6)
    assert phase_distance(fit.value("phi0_prime"), phi0) < 1e-6
    assert fit.rss < 1e-12


def test_fit_tau_recovers_envelope():
    plus, minus = first_order_data(20, 317e-6, 0.2, tau=400e-6)
    fit = fit_first_order(plus, minus, 600e-6, fit_tau=True)
    assert fit.value("tau") == pytest.approx(400e-6, rel=1e-6)


def test_noisy_first_order_within_two_sigma():
    rng = np.random.default_rng(2024)
    plus, minus = first_order_data(20, 317e-6, 0.0, rng=rng)
    fit = fit_first_order(plus, minus, TAU)
    assert abs(fit.period - 317e-6) < 2 * fit.period_sigma
    assert fit.period_sigma < 10e-6


def test_noisy_fit_pulls_are_unit_width():
    rng = np.random.default_rng(99)
    pulls = []
    for _ in range(30):
        plus, minus = first_order_data(20, 317e-6, 0.0, rng=rng)
        fit = fit_first_order(plus, minus, TAU, restarts=2)
        pulls.append((fit.period - 317e-6) / fit.period_sigma)
    assert abs(np.mean(pulls)) < 0.6
    assert 0.6 < np.std(pulls) < 1.5


def test_phase_is_wrapped():
    plus, minus = first_order_data(20, 317e-6, 3.0)
    fit = fit_first_order(plus, minus, TAU)
    assert -math.pi <= fit.value("phi0") < math.pi


def test_fit_deterministic_in_seed():
    rng = np.random.default_rng(3)
    plus, minus = first_order_data(20, 317e-6, 0.0, rng=rng)
    a = fit_first_order(plus, minus, TAU, seed=4)
    b = fit_first_order(plus, minus, TAU, seed=4)
    assert a.to_text() == b.to_text()


def test_zero_trial_points_are_skipped():
    plus, minus = first_order_data(20, 317e-6, 0.0)
    plus.n[3] = plus.k[3] = 0
    fit = fit_first_order(plus, minus, TAU)
    assert fit.period == pytest.approx(317e-6, rel=1e-6)
    assert len(fit.residuals["plus"]) == len(GRID) - 1


def test_fit_errors():
    plus, minus = first_order_data(20, 317e-6, 0.0, grid=GRID[:2])
    with pytest.raises(ValueError):
        fit_first_order(plus, minus, TAU)
    with pytest.raises(ValueError):
        fit_second_order(second_order_data(0.02, 1e-4, 160e-6, 0.0, grid=GRID[:4]), TAU)
    full = first_order_data(20, 317e-6, 0.0)
    with pytest.raises(ValueError):
        fit_first_order(*full, 0.0)


def test_text_roundtrip():
    plus, minus = first_order_data(20, 317e-6, 0.0)
    fit = fit_first_order(plus, minus, TAU)
    back = parse_fit_text(fit.to_text())
    assert back == fit.params
    assert len(fit.csv_header()) == len(fit.csv_row())
    assert {r[0] for r in fit.residual_rows()} == {"plus", "minus"}
