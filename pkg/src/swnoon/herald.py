"""Write-process atom-light state and measurement-induced (heralded) spin-wave states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .fock import FockVector, LayoutError, ModeLayout, tensor
from .optics import DetectionNetwork, apply_network, noon_network, projector_state

SPIN_MODES = ("SWa", "SWb")
# Stokes photon of mode a leaves the combining PBS vertically polarized, mode b horizontally.
WRITE_LAYOUT = ("SWa", "S_V", "SWb", "S_H")

# Below this a heralding pattern is treated as impossible.
MIN_PROBABILITY = 1e-20


class ImpossibleOutcome(ValueError):
    """The requested click pattern has zero probability for this state."""


@dataclass(frozen=True)
class WriteParams:
    chi: float
    cutoff: int

    def __post_init__(self):
        if not 0.0 <= self.chi < 1.0:
            raise ValueError(f"chi must lie in [0, 1), got {self.chi}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be an integer >= 1, got {self.cutoff}")


@dataclass(frozen=True)
class ClickPattern:
    """Detector label -> outcome (0/1 for threshold detectors, a count otherwise).

    Detectors not listed are unconstrained.
    """

    outcomes: Mapping[str, int]

    def __post_init__(self):
        object.__setattr__(self, "outcomes", dict(self.outcomes))
        for label, n in self.outcomes.items():
            if int(n) != n or n < 0:
                raise ValueError(f"invalid outcome {n!r} for detector {label}")

    @classmethod
    def clicks(cls, *clicked: str, silent: Sequence[str] = ()) -> "ClickPattern":
        out = {d: 1 for d in clicked}
        out.update({d: 0 for d in silent})
        return cls(out)

    def clicked(self, label: str) -> bool:
        return self.outcomes.get(label, 0) > 0

    def __str__(self):
        return " ".join(f"{k}={v}" for k, v in sorted(self.outcomes.items()))


@dataclass(frozen=True)
class HeraldResult:
    """Conditional spin-wave state after a herald.

    Photonic outcomes that a threshold detector (or an unmonitored port)
    cannot tell apart leave the spin waves in a mixture; ``branches`` holds its
    unnormalized pure components, whose squared norms sum to ``probability``.
    ``state`` is the heaviest branch, normalized.
    """

    state: Optional[FockVector]
    probability: float
    branches: Tuple[FockVector, ...] = ()
    attempts: int = 1
    timed_out: bool = False
    truncation_loss: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return np.array([b.norm_squared() for b in self.branches])

    def fidelity(self, target: FockVector) -> float:
        """<t|rho|t> for the normalized target and the branch mixture."""
        if self.timed_out or not self.branches:
            raise ValueError("no conditional state to compare")
        t = target.normalize()
        if t.layout != self.branches[0].layout:
            raise LayoutError(f"target layout {t.layout} differs from {self.branches[0].layout}")
        total = sum(abs(np.vdot(t.amplitudes, b.amplitudes)) ** 2 for b in self.branches)
        return float(min(1.0, total / self.weights.sum()))

    def sample_branch(self, rng: np.random.Generator) -> FockVector:
        w = self.weights
        k = int(rng.choice(len(w), p=w / w.sum())) if len(w) > 1 else 0
        return self.branches[k].normalize()


# -- write process -----------------------------------------------------------------


def two_mode_squeezed(chi: float, cutoff: int, modes: Tuple[str, str]) -> FockVector:
    """sum_n sqrt(chi)^n |n>|n>, normalized over n <= cutoff."""
    layout = ModeLayout(modes, cutoff)
    amps = np.zeros(layout.shape, dtype=complex)
    for n in range(cutoff + 1):
        amps[n, n] = math.sqrt(chi) ** n
    return FockVector(layout, amps).normalize()


def write_state(p: WriteParams) -> FockVector:
    """Atom-light state of both ensembles, layout (SWa, S_V, SWb, S_H)."""
    a = two_mode_squeezed(p.chi, p.cutoff, ("SWa", "S_V"))
    b = two_mode_squeezed(p.chi, p.cutoff, ("SWb", "S_H"))
    return tensor(a, b)


# -- heralding ------------------------------------------------------------------------


def _split_photonic(state: FockVector, photonic: Sequence[str]):
    """Return (photonic occupations [rows, P], amplitude matrix [rows, rest], kept modes)."""
    idx = [state.layout.index(m) for m in photonic]
    keep = tuple(m for m in state.layout.modes if m not in photonic)
    d = state.layout.cutoff + 1
    moved = np.moveaxis(state.amplitudes, idx, list(range(len(idx))))
    mat = moved.reshape(d ** len(idx), -1)
    occ = np.indices((d,) * len(idx)).reshape(len(idx), -1).T
    return occ, mat, keep


def _collect(mat: np.ndarray, mask: np.ndarray, keep, cutoff, norm_in, loss) -> HeraldResult:
    rows = mat[mask]
    weights = np.sum(np.abs(rows) ** 2, axis=1) / norm_in
    prob = float(weights.sum())
    if prob < MIN_PROBABILITY:
        raise ImpossibleOutcome(f"pattern probability {prob:.3g} is zero")
    layout = ModeLayout(keep, cutoff)
    order = np.argsort(-weights, kind="stable")
    branches = tuple(
        FockVector(layout, rows[i] / math.sqrt(norm_in)) for i in order if weights[i] > MIN_PROBABILITY * 1e-6
    )
    return HeraldResult(
        state=branches[0].normalize(), probability=prob, branches=branches, truncation_loss=loss
    )


def herald(
    state: FockVector,
    network: DetectionNetwork,
    pattern: ClickPattern,
    number_resolving: bool = False,
) -> HeraldResult:
    """Condition the non-photonic modes of ``state`` on a detector pattern.

    The network's photonic modes are measured (detected ones) or traced out
    (unmonitored ones) and dropped from the returned layout.
    """
    unknown = set(pattern.outcomes) - set(network.detector_labels)
    if unknown:
        raise LayoutError(f"pattern names detectors {sorted(unknown)} absent from network {network.name!r}")
    norm_in = state.norm_squared()
    out = apply_network(state, network)
    photonic = network.photonic_modes
    occ, mat, keep = _split_photonic(out, photonic)
    mask = np.ones(len(occ), dtype=bool)
    for label, want in pattern.outcomes.items():
        col = occ[:, photonic.index(network.detector_mode(label))]
        if number_resolving:
            mask &= col == want
        else:
            mask &= (col > 0) if want else (col == 0)
    loss = (out.truncation_loss - state.truncation_loss) / norm_in
    return _collect(mat, mask, keep, out.layout.cutoff, norm_in, loss)


def herald_projector(state: FockVector, target: FockVector) -> HeraldResult:
    """Ideal projective measurement of ``target``'s modes onto ``target``."""
    t = target.normalize()
    modes = t.layout.modes
    if state.layout.cutoff < t.layout.cutoff:
        raise LayoutError("projector cutoff exceeds the state's cutoff")
    d = state.layout.cutoff + 1
    tv = np.zeros((d,) * len(modes), dtype=complex)
    tv[(slice(0, t.layout.cutoff + 1),) * len(modes)] = t.amplitudes
    occ, mat, keep = _split_photonic(state, modes)
    row = tv.reshape(-1).conj() @ mat
    norm_in = state.norm_squared()
    mask = np.array([True])
    return _collect(row[None, :], mask, keep, state.layout.cutoff, norm_in, 0.0)


def all_patterns(network: DetectionNetwork) -> List[ClickPattern]:
    """Every threshold pattern over the network's detectors."""
    labels = network.detector_labels
    out = []
    for bits in range(2 ** len(labels)):
        out.append(ClickPattern({d: (bits >> i) & 1 for i, d in enumerate(labels)}))
    return out


def coincidence(network: DetectionNetwork) -> ClickPattern:
    return ClickPattern({d: 1 for d in network.detector_labels})


def herald_probability_scaling(
    chi: float, n_max: int, cutoff: Optional[int] = None, method: str = "projector"
) -> List[Tuple[int, float]]:
    """Success probability of the N-fold NOON herald for N = 1..n_max.

    ``method="projector"`` projects the Stokes light onto |H>^N - |V>^N;
    ``"network"`` runs the full beam-splitter circuit with threshold
    detectors (dense simulation, practical for N <= 3).
    """
    cutoff = n_max + 2 if cutoff is None else cutoff
    if n_max > cutoff:
        raise ValueError(f"N_max={n_max} exceeds cutoff={cutoff}")
    if method not in ("projector", "network"):
        raise ValueError(f"unknown method {method!r}")
    state = write_state(WriteParams(chi, cutoff))
    rows = []
    for n in range(1, n_max + 1):
        try:
            if method == "projector":
                res = herald_projector(state, projector_state(n, cutoff=n))
            else:
                net = noon_network(n)
                res = herald(state, net, coincidence(net))
            rows.append((n, res.probability))
        except ImpossibleOutcome:
            rows.append((n, 0.0))
    return rows


# -- repeat until success ----------------------------------------------------------------


def sample_attempts(p: float, max_attempts: int, rng: np.random.Generator) -> Optional[int]:
    """Attempts until the first success of a Bernoulli(p) trial; None on timeout."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if p <= 0.0:
        return None
    n = int(rng.geometric(min(p, 1.0)))
    return n if n <= max_attempts else None


def repeat_until_success(
    p: WriteParams,
    network: DetectionNetwork,
    pattern: ClickPattern,
    max_attempts: int,
    rng: np.random.Generator,
    number_resolving: bool = False,
) -> HeraldResult:
    """Fire write pulses (each after a clean re-preparation) until ``pattern`` occurs."""
    res = herald(write_state(p), network, pattern, number_resolving)
    n = sample_attempts(res.probability, max_attempts, rng)
    if n is None:
        return replace(res, state=None, branches=(), attempts=max_attempts, timed_out=True)
    return replace(res, attempts=n)
