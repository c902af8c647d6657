"""Anti-Stokes readout: closed-form click models, exact readout statistics and Monte Carlo.

Readout chain for a spin-wave state on (SWa, SWb): phase evolution for dt,
independent per-excitation retrieval with efficiency gamma0 * envelope(dt),
SWa -> AS_H and SWb -> AS_V with the stabilized phase on AS_V, HWP at 22.5
degrees, and a PBS whose |+> port feeds D_AS1 and |-> port feeds D_AS2.
Background clicks are ORed in independently per detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .dynamics import MotionParams, dephasing_envelope, evolve, phase_shift
from .fock import FockVector, LayoutError, ModeLayout, pad_cutoff
from .herald import ClickPattern, HeraldResult, herald, write_state
from .optics import OpticalElement, fock_matrix, hwp, stokes_analyzer
from .streams import STREAM_FRINGE, derive_rng

AS_DETECTORS = ("D_AS1", "D_AS2")


@dataclass(frozen=True)
class DetectorModel:
    gamma0: float = 0.15
    gamma_b: float = 0.002
    number_resolving: bool = False

    def __post_init__(self):
        if not 0 < self.gamma0 <= 1:
            raise ValueError(f"gamma0 must lie in (0, 1], got {self.gamma0}")
        if not 0 <= self.gamma_b < 1:
            raise ValueError(f"gamma_b must lie in [0, 1), got {self.gamma_b}")

    def efficiency(self, dt, p: MotionParams):
        """gamma(dt) = gamma0 exp(-dt^2 / tau^2)."""
        return self.gamma0 * dephasing_envelope(dt, p)


# -- closed forms ---------------------------------------------------------------------


def first_order_probabilities(dt, det: DetectorModel, p: MotionParams, herald_sign: int = +1):
    """(p_AS1, p_AS2) for a single excitation heralded on |+> (sign +1) or |-> (sign -1)."""
    g = det.efficiency(dt, p)
    x = phase_shift(dt, p) + p.phi0
    c2, s2 = np.cos(x) ** 2, np.sin(x) ** 2
    if herald_sign < 0:
        c2, s2 = s2, c2
    return g * c2 + det.gamma_b, g * s2 + det.gamma_b


def first_order_fidelity(dt, det: DetectorModel, p: MotionParams, herald_sign: int = +1):
    """Fraction of anti-Stokes clicks landing on |+>, i.e. f_{+|+} or f_{+|-}."""
    p1, p2 = first_order_probabilities(dt, det, p, herald_sign)
    return p1 / (p1 + p2)


def noon_phase_offset(p: MotionParams, noon_sign: int = -1) -> float:
    """phi0' for which the two-photon coincidence reads sin^2(2 dphi + phi0')."""
    return 2 * p.phi0 + (math.pi / 2 if noon_sign < 0 else 0.0)


def second_order_coincidence(
    dt,
    det: DetectorModel,
    p: MotionParams,
    phi0_prime: Optional[float] = None,
    pair_factor: float = 1.0,
    noon_sign: int = -1,
):
    """D_AS1 x D_AS2 coincidence probability for a heralded two-excitation NOON state.

    pair_factor * gamma^2 sin^2(2 dphi + phi0') + 2 gamma_b gamma + gamma_b^2.
    Ideal thinning gives the two-photon term a unit prefactor; 0.5 halves it.
    """
    g = det.efficiency(dt, p)
    if phi0_prime is None:
        phi0_prime = noon_phase_offset(p, noon_sign)
    x = 2 * phase_shift(dt, p) + phi0_prime
    gb = det.gamma_b
    return pair_factor * g**2 * np.sin(x) ** 2 + 2 * gb * g + gb**2


# -- exact readout statistics -------------------------------------------------------------


def _readout_unitary(p: MotionParams) -> OpticalElement:
    # a^dag_H -> a^dag_H, a^dag_V -> e^{i phi_stab} a^dag_V, then the 22.5 deg HWP
    u = np.diag([1.0, np.exp(1j * p.phi_stab)]) @ hwp(math.radians(22.5), ("H", "V")).matrix
    return OpticalElement(("AS_H", "AS_V"), u, name="readout")


def _loss_kraus(amps: np.ndarray, eta: float):
    """Yield pure branches of independent per-excitation loss on a 2-mode amplitude array."""
    d = amps.shape[0]
    n = np.arange(d)
    for la in range(d):
        for lb in range(d):
            out = np.zeros_like(amps)
            na, nb = n[la:], n[lb:]
            ca = np.sqrt([math.comb(int(k), la) for k in na]) * np.sqrt(eta) ** (na - la) * np.sqrt(1 - eta) ** la
            cb = np.sqrt([math.comb(int(k), lb) for k in nb]) * np.sqrt(eta) ** (nb - lb) * np.sqrt(1 - eta) ** lb
            out[: d - la, : d - lb] = amps[la:, lb:] * np.outer(ca, cb)
            if np.any(out):
                yield out


def photon_distribution(state: FockVector, dt: float, det: DetectorModel, p: MotionParams) -> np.ndarray:
    """P[n_plus, n_minus] of anti-Stokes photons reaching the two analyzer ports (no background)."""
    if set(state.layout.modes) != {"SWa", "SWb"}:
        raise LayoutError(f"readout expects a state on (SWa, SWb) only, got {state.layout.modes}")
    s = evolve(state.normalize(), dt, p)
    if s.layout.modes != ("SWa", "SWb"):
        s = FockVector(ModeLayout(("SWa", "SWb"), s.layout.cutoff), np.transpose(s.amplitudes))
    # the HWP can bunch all photons into one port
    s = pad_cutoff(s, 2 * s.layout.cutoff)
    d = s.layout.cutoff + 1
    w = fock_matrix(_readout_unitary(p), s.layout.cutoff)
    eta = float(det.efficiency(dt, p))
    probs = np.zeros((d, d))
    for branch in _loss_kraus(s.amplitudes, eta):
        out = (w @ branch.reshape(-1)).reshape(d, d)
        probs += np.abs(out) ** 2
    return probs


def _with_background(sig: np.ndarray, gamma_b: float) -> np.ndarray:
    """Threshold pattern table P[c1, c2] after ORing independent background clicks."""
    bg = np.array([[1 - gamma_b, gamma_b], [0.0, 1.0]])  # bg[s, c]: P(click c | signal s)
    return bg.T @ sig @ bg


def readout_distribution(
    state: FockVector, dt: float, det: DetectorModel, p: MotionParams, include_background: bool = True
) -> np.ndarray:
    """Threshold click table P[c_AS1, c_AS2] for one readout of ``state``."""
    photons = photon_distribution(state, dt, det, p)
    sig = np.zeros((2, 2))
    sig[0, 0] = photons[0, 0]
    sig[1, 0] = photons[1:, 0].sum()
    sig[0, 1] = photons[0, 1:].sum()
    sig[1, 1] = photons[1:, 1:].sum()
    sig /= sig.sum()
    return _with_background(sig, det.gamma_b) if include_background else sig


def simulate_readout(
    state: FockVector, dt: float, det: DetectorModel, p: MotionParams, rng: np.random.Generator
) -> ClickPattern:
    """One Monte-Carlo readout: sample the signal pattern, then OR in background clicks."""
    if det.number_resolving:
        photons = photon_distribution(state, dt, det, p)
        photons = photons / photons.sum()
        k = int(rng.choice(photons.size, p=photons.reshape(-1)))
        counts = list(np.unravel_index(k, photons.shape))
    else:
        sig = readout_distribution(state, dt, det, p, include_background=False)
        k = int(rng.choice(4, p=sig.reshape(-1)))
        counts = [k // 2, k % 2]
    bg = rng.random(2) < det.gamma_b
    out = {}
    for label, n, b in zip(AS_DETECTORS, counts, bg):
        out[label] = int(n) + int(b) if det.number_resolving else int(n > 0 or b)
    return ClickPattern(out)


def sample_click_counts(sig: np.ndarray, n: int, gamma_b: float, rng: np.random.Generator) -> np.ndarray:
    """Tally ``n`` independent readouts into a 2x2 table of (c_AS1, c_AS2) outcomes.

    Equivalent in distribution to calling ``simulate_readout`` ``n`` times.
    """
    table = np.zeros((2, 2), dtype=np.int64)
    groups = rng.multinomial(n, sig.reshape(-1) / sig.sum()).reshape(2, 2)
    bgp = np.array([(1 - gamma_b) ** 2, (1 - gamma_b) * gamma_b, gamma_b * (1 - gamma_b), gamma_b**2])
    for s1 in range(2):
        for s2 in range(2):
            m = int(groups[s1, s2])
            if m == 0:
                continue
            b = rng.multinomial(m, bgp).reshape(2, 2)
            for b1 in range(2):
                for b2 in range(2):
                    table[s1 | b1, s2 | b2] += b[b1, b2]
    return table


# -- datasets ------------------------------------------------------------------------------


@dataclass
class FringeDataset:
    """Counts per delay: ``channels[name][i]`` clicks out of ``trials[i]`` heralded runs."""

    dt: np.ndarray
    trials: np.ndarray
    channels: Dict[str, np.ndarray]
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.dt = np.asarray(self.dt, dtype=float)
        self.trials = np.asarray(self.trials, dtype=np.int64)
        self.channels = {k: np.asarray(v, dtype=np.int64) for k, v in self.channels.items()}
        if self.dt.ndim != 1 or len(self.trials) != len(self.dt):
            raise ValueError("dt and trials must be 1-d arrays of equal length")
        if np.any(np.diff(self.dt) <= 0):
            raise ValueError("dt values must be strictly increasing")
        for name, counts in self.channels.items():
            if counts.shape != self.dt.shape:
                raise ValueError(f"channel {name} has {counts.shape} entries for {self.dt.shape} points")
            if np.any(counts > self.trials) or np.any(counts < 0):
                raise ValueError(f"channel {name} has counts outside [0, trials]")

    @property
    def flagged(self) -> np.ndarray:
        """Points that ran no trials."""
        return self.trials == 0

    def __len__(self):
        return len(self.dt)


def first_order_channels(counts_plus: np.ndarray, counts_minus: np.ndarray, timeouts) -> Dict[str, int]:
    out = {}
    for tag, t in (("plus", counts_plus), ("minus", counts_minus)):
        out[f"{tag}_as1"] = int(t[1, :].sum())
        out[f"{tag}_as2"] = int(t[:, 1].sum())
        out[f"{tag}_coinc"] = int(t[1, 1])
    out["plus_timeouts"], out["minus_timeouts"] = timeouts
    return out


def herald_conditions(order: int, number_resolving: bool = False) -> Dict[str, ClickPattern]:
    """Stokes click patterns used to herald each sub-experiment."""
    if order == 1:
        return {
            "plus": ClickPattern({"D_S1": 1, "D_S2": 0}),
            "minus": ClickPattern({"D_S1": 0, "D_S2": 1}),
        }
    if order == 2:
        return {"noon": ClickPattern({"D_S1": 1, "D_S2": 1})}
    raise ValueError(f"order must be 1 or 2, got {order}")


def prepare_heralds(config, order: int) -> Dict[str, HeraldResult]:
    state = write_state(config.write_params())
    analyzer = stokes_analyzer()
    return {
        name: herald(state, analyzer, pattern, config.number_resolving)
        for name, pattern in herald_conditions(order).items()
    }


def _acquire_point(dt, heralds, n_trials, config, rng):
    """Repeat-until-success heralding then readout, for ``n_trials`` runs at one delay."""
    det, motion = config.detector(), config.motion()
    tables, timeouts = {}, {}
    for name, res in heralds.items():
        n_to = int(np.sum(rng.geometric(min(res.probability, 1.0), size=n_trials) > config.max_attempts))
        ok = n_trials - n_to
        w = res.weights
        per_branch = rng.multinomial(ok, w / w.sum())
        table = np.zeros((2, 2), dtype=np.int64)
        for branch, m in zip(res.branches, per_branch):
            if m == 0:
                continue
            sig = readout_distribution(branch.normalize(), dt, det, motion, include_background=False)
            table += sample_click_counts(sig, int(m), det.gamma_b, rng)
        tables[name], timeouts[name] = table, n_to
    return tables, timeouts


def acquire_fringe(config, order: Optional[int] = None, dt_grid=None, seed: Optional[int] = None) -> FringeDataset:
    """Simulate a delay scan.

    Order 1 heralds on D_S1 ("plus") and on D_S2 ("minus") separately and
    records anti-Stokes clicks for each; order 2 heralds on the D_S1 x D_S2
    coincidence and records the D_AS1 x D_AS2 coincidences.  Point ``i``
    draws from the stream (seed, STREAM_FRINGE, order, i).
    """
    order = config.order if order is None else order
    grid = config.grid() if dt_grid is None else np.asarray(dt_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("dt grid is empty")
    seed = config.seed if seed is None else seed
    heralds = prepare_heralds(config, order)
    n = int(config.trials_per_point)
    rows = []
    for i, dt in enumerate(grid):
        rng = derive_rng(seed, STREAM_FRINGE, order, i)
        tables, timeouts = _acquire_point(float(dt), heralds, n, config, rng)
        if order == 1:
            rows.append(first_order_channels(tables["plus"], tables["minus"], (timeouts["plus"], timeouts["minus"])))
        else:
            t = tables["noon"]
            rows.append(
                {
                    "as1": int(t[1, :].sum()),
                    "as2": int(t[:, 1].sum()),
                    "coinc": int(t[1, 1]),
                    "timeouts": timeouts["noon"],
                }
            )
    channels = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    meta = dict(config.to_dict())
    meta.update(order=order, seed=seed)
    meta["herald_probability"] = {k: v.probability for k, v in heralds.items()}
    return FringeDataset(grid, np.full(len(grid), n), channels, meta)
