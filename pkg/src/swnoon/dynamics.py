"""Collective-motion phase, dephasing envelope, pump velocity and analytic fringes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import FockVector, LayoutError

RB87_D1_WAVELENGTH = 794.98e-9


class NoFringe(ValueError):
    """A vanishing collective velocity gives an infinite fringe period."""


@dataclass(frozen=True)
class MotionParams:
    lambda_m: float = RB87_D1_WAVELENGTH
    theta: float = math.radians(0.6)
    v0: float = 0.03
    vp: float = 0.0
    tau: float = 200e-6
    phi_stab: float = 0.0

    def __post_init__(self):
        if self.lambda_m <= 0:
            raise ValueError(f"lambda_m must be positive, got {self.lambda_m}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not abs(self.theta) < math.pi / 2:
            raise ValueError(f"|theta| must be below pi/2, got {self.theta}")

    @property
    def v_c(self) -> float:
        return self.v0 + self.vp

    @property
    def phi0(self) -> float:
        """Fringe offset -(phi_1 + phi_2)/2 set by the stabilized propagation phase."""
        return -self.phi_stab / 2


@dataclass(frozen=True)
class GhzSpec:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"GHZ order must be >= 1, got {self.n}")


def delta_k(p: MotionParams) -> float:
    """Spin-wave wave number k_W sin(theta) in rad/m."""
    return 2 * math.pi / p.lambda_m * math.sin(p.theta)


def phase_shift(dt, p: MotionParams):
    """Delta phi(dt) = dk * v_c * dt."""
    return delta_k(p) * p.v_c * np.asarray(dt, dtype=float)


def evolve(state: FockVector, dt: float, p: MotionParams, modes=("SWa", "SWb")) -> FockVector:
    """Each component picks up exp(i (n_a - n_b) dphi); mode a sits at +dk, b at -dk."""
    try:
        ia, ib = state.layout.index(modes[0]), state.layout.index(modes[1])
    except LayoutError as exc:
        raise LayoutError(f"evolve needs spin-wave modes {modes}: {exc}") from None
    grids = np.indices(state.layout.shape)
    dphi = float(phase_shift(dt, p))
    factor = np.exp(1j * (grids[ia] - grids[ib]) * dphi)
    return FockVector(state.layout, state.amplitudes * factor, state.truncation_loss)


def dephasing_envelope(dt, p: MotionParams):
    """exp(-dt^2 / tau^2): retrieval-efficiency decay per spin-wave excitation."""
    dt = np.asarray(dt, dtype=float)
    return np.exp(-(dt**2) / p.tau**2)


def pump_velocity(power_mw: float, v_max: float, p_sat: float) -> float:
    """Saturating pump-induced velocity v_max (1 - exp(-P / P_sat))."""
    if power_mw < 0:
        raise ValueError(f"pump power must be non-negative, got {power_mw}")
    if p_sat <= 0:
        raise ValueError(f"P_sat must be positive, got {p_sat}")
    return v_max * (1 - math.exp(-power_mw / p_sat))


def period_from_velocity(v_c: float, p: MotionParams) -> float:
    """First-order fringe period T = pi / (dk v_c)."""
    dk = delta_k(p)
    if v_c == 0 or dk == 0:
        raise NoFringe("zero projected velocity: the fringe never advances")
    return math.pi / (dk * v_c)


def velocity_from_period(period: float, p: MotionParams) -> float:
    if period == 0 or delta_k(p) == 0:
        raise NoFringe("period and dk must be nonzero")
    return math.pi / (delta_k(p) * period)


def noon_phase(n: int, dt, p: MotionParams):
    """Relative phase 2 N dphi accumulated between |N,0> and |0,N>."""
    return 2 * n * phase_shift(dt, p)


def ghz_fringe(spec: GhzSpec, dphi, phi0: float = 0.0):
    """Ideal parity-type fringe sin^2(N dphi + phi0)."""
    return np.sin(spec.n * np.asarray(dphi, dtype=float) + phi0) ** 2


def ghz_period(spec: GhzSpec) -> float:
    """Fringe period in dphi."""
    return math.pi / spec.n
