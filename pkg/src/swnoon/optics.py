"""Linear-optical elements acting on photonic modes of a FockVector.

An element holds a unitary ``U`` over its modes with the convention
``a_j^dagger -> sum_k U[j, k] a_k^dagger``.  Its action on Fock states is
obtained by expanding every creation-operator monomial through ``U``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .fock import FockVector, LayoutError, ModeLayout, from_terms, tensor, vacuum

UNITARY_TOL = 1e-10


class NonUnitaryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OpticalElement:
    modes: Tuple[str, ...]
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (len(self.modes), len(self.modes)):
            raise ValueError(f"matrix shape {m.shape} does not match {len(self.modes)} modes")
        if len(set(self.modes)) != len(self.modes):
            raise LayoutError(f"duplicate modes in element {self.modes}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def unitarity_error(self) -> float:
        u = self.matrix
        return float(np.max(np.abs(u.conj().T @ u - np.eye(len(self.modes)))))

    def describe(self) -> str:
        rows = []
        for row in self.matrix:
            rows.append("  " + "  ".join(f"{z.real:+.6f}{z.imag:+.6f}j" for z in row))
        return f"[{self.name or 'element'}] modes={','.join(self.modes)}\n" + "\n".join(rows)


# -- element constructors ---------------------------------------------------------


def hwp(angle: float, modes: Tuple[str, str]) -> OpticalElement:
    """Half-wave plate with fast axis at ``angle`` (radians) from H.

    (H, V) -> (cos2t H + sin2t V, sin2t H - cos2t V).
    """
    if modes[0] == modes[1]:
        raise LayoutError("HWP needs two distinct modes")
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    return OpticalElement(modes, [[c, s], [s, -c]], name=f"HWP({math.degrees(angle):.4g} deg)")


def phase_shifter(j: int, n: int, v_mode: str) -> OpticalElement:
    """Multiply the V mode by -exp(2 pi i j / n); H is untouched."""
    if not 1 <= j <= n:
        raise ValueError(f"phase shifter index must satisfy 1 <= j <= N, got j={j}, N={n}")
    return OpticalElement((v_mode,), [[-np.exp(2j * np.pi * j / n)]], name=f"PS{j}")


def phase(phi: float, mode: str) -> OpticalElement:
    return OpticalElement((mode,), [[np.exp(1j * phi)]], name=f"phase({phi:.4g})")


def beamsplitter(reflectivity: float, modes: Tuple[str, str]) -> OpticalElement:
    """Lossless BS with intensity reflectivity R; the reflected arm picks up i*sqrt(R)."""
    if not 0.0 <= reflectivity <= 1.0:
        raise ValueError(f"reflectivity must lie in [0, 1], got {reflectivity}")
    t, r = math.sqrt(1 - reflectivity), math.sqrt(reflectivity)
    return OpticalElement(modes, [[t, 1j * r], [1j * r, t]], name=f"BS(R={reflectivity:.4g})")


def polarization_beamsplitter(
    reflectivity: float, port_in: Tuple[str, str], port_out: Tuple[str, str]
) -> OpticalElement:
    """Polarization-independent BS coupling two spatial ports, each an (H, V) mode pair."""
    bs = beamsplitter(reflectivity, ("x", "y")).matrix
    modes = (port_in[0], port_in[1], port_out[0], port_out[1])
    u = np.zeros((4, 4), dtype=complex)
    for p in range(2):  # H, then V
        u[p, p], u[p, 2 + p] = bs[0, 0], bs[0, 1]
        u[2 + p, p], u[2 + p, 2 + p] = bs[1, 0], bs[1, 1]
    return OpticalElement(modes, u, name=f"BS(R={reflectivity:.4g})")


# -- Fock-space action ---------------------------------------------------------------


def _poly_mul_linear(poly: Dict[Tuple[int, ...], complex], row: np.ndarray) -> Dict[Tuple[int, ...], complex]:
    out: Dict[Tuple[int, ...], complex] = {}
    for mono, coef in poly.items():
        for k, u in enumerate(row):
            if u == 0:
                continue
            key = mono[:k] + (mono[k] + 1,) + mono[k + 1:]
            out[key] = out.get(key, 0j) + coef * u
    return out


@functools.lru_cache(maxsize=256)
def _fock_transform(key: bytes, k: int, cutoff: int) -> np.ndarray:
    u = np.frombuffer(key, dtype=complex).reshape(k, k)
    d = cutoff + 1
    w = np.zeros((d**k, d**k), dtype=complex)
    polys: Dict[Tuple[int, ...], Dict[Tuple[int, ...], complex]] = {(0,) * k: {(0,) * k: 1.0 + 0j}}
    for col, occ in enumerate(itertools.product(range(d), repeat=k)):
        if occ not in polys:
            j = next(i for i, n in enumerate(occ) if n)
            prev = occ[:j] + (occ[j] - 1,) + occ[j + 1:]
            polys[occ] = _poly_mul_linear(polys[prev], u[j])
        norm_in = math.sqrt(math.prod(math.factorial(n) for n in occ))
        for mono, coef in polys[occ].items():
            if max(mono) > cutoff:
                continue
            row = 0
            for n in mono:
                row = row * d + n
            w[row, col] += coef * math.sqrt(math.prod(math.factorial(n) for n in mono)) / norm_in
    return w


def fock_matrix(element: OpticalElement, cutoff: int) -> np.ndarray:
    """Matrix of the induced Fock-space map on the element's modes (truncated)."""
    u = np.ascontiguousarray(element.matrix)
    return _fock_transform(u.tobytes(), len(element.modes), cutoff)


def apply_element(state: FockVector, element: OpticalElement) -> FockVector:
    err = element.unitarity_error()
    if err > UNITARY_TOL:
        raise NonUnitaryError(f"{element.name or 'element'} deviates from unitarity by {err:.3g}")
    axes = [state.layout.index(m) for m in element.modes]
    k = len(axes)
    d = state.layout.cutoff + 1
    w = fock_matrix(element, state.layout.cutoff)
    moved = np.moveaxis(state.amplitudes, axes, list(range(k)))
    rest = moved.shape[k:]
    out = (w @ moved.reshape(d**k, -1)).reshape((d,) * k + rest)
    out = np.moveaxis(out, list(range(k)), axes)
    before = state.norm_squared()
    after = float(np.vdot(out, out).real)
    lost = max(0.0, before - after)
    return FockVector(state.layout, out, state.truncation_loss + lost)


# -- networks -----------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectionNetwork:
    """Ordered elements plus detector assignments.

    ``ancilla_modes`` are network-internal modes that start in vacuum and are
    appended to the incoming state's layout.  Output modes that carry no
    detector are unmonitored and traced out on heralding.
    """

    input_modes: Tuple[str, ...]
    elements: Tuple[OpticalElement, ...]
    detectors: Tuple[Tuple[str, str], ...]  # (detector label, output mode)
    ancilla_modes: Tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        modes = set(self.input_modes) | set(self.ancilla_modes)
        for el in self.elements:
            missing = set(el.modes) - modes
            if missing:
                raise LayoutError(f"element {el.name} uses unknown modes {sorted(missing)}")
        outs = [m for _, m in self.detectors]
        if len(set(outs)) != len(outs):
            raise LayoutError("a network output mode feeds more than one detector")
        labels = [d for d, _ in self.detectors]
        if len(set(labels)) != len(labels):
            raise LayoutError("duplicate detector labels")
        if set(outs) - modes:
            raise LayoutError(f"detectors attached to unknown modes {sorted(set(outs) - modes)}")

    @property
    def detector_labels(self) -> Tuple[str, ...]:
        return tuple(d for d, _ in self.detectors)

    @property
    def photonic_modes(self) -> Tuple[str, ...]:
        return self.input_modes + self.ancilla_modes

    def detector_mode(self, label: str) -> str:
        for d, m in self.detectors:
            if d == label:
                return m
        raise KeyError(f"no detector {label!r} in network {self.name!r}")

    def describe(self) -> str:
        head = [
            f"network {self.name}",
            f"inputs: {','.join(self.input_modes)}",
            f"ancillas: {','.join(self.ancilla_modes) or '-'}",
            "detectors: " + ", ".join(f"{d}<-{m}" for d, m in self.detectors),
        ]
        blocks = [el.describe() for el in self.elements]
        return "\n".join(head) + "\n\n" + "\n\n".join(blocks) + "\n"


def apply_network(state: FockVector, network: DetectionNetwork) -> FockVector:
    """Append vacuum ancillas and run every element in order."""

    missing = set(network.input_modes) - set(state.layout.modes)
    if missing:
        raise LayoutError(f"state lacks network input modes {sorted(missing)}")
    if network.ancilla_modes:
        state = tensor(state, vacuum(ModeLayout(network.ancilla_modes, state.layout.cutoff)))
    for el in network.elements:
        state = apply_element(state, el)
    return state


def stokes_analyzer(h_mode: str = "S_H", v_mode: str = "S_V", labels=("D_S1", "D_S2")) -> DetectionNetwork:
    """HWP at 22.5 deg followed by a PBS: first detector sees |+>, second sees |->."""
    return DetectionNetwork(
        input_modes=(h_mode, v_mode),
        elements=(hwp(math.radians(22.5), (h_mode, v_mode)),),
        detectors=((labels[0], h_mode), (labels[1], v_mode)),
        name="analyzer",
    )


def noon_network(n: int, h_mode: str = "S_H", v_mode: str = "S_V") -> DetectionNetwork:
    """N-fold NOON projection circuit.

    A BS chain splits the combined Stokes beam into N arms of equal weight
    (BS_i has reflectivity 1/(i+1); BS_{N-1} taps first).  Arm j carries PS_j
    and a 45-degree PBS whose transmitted |+> port feeds detector D_j.  The
    N-fold coincidence projects onto |H>^N - |V>^N.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"noon_network needs N >= 1, got {n}")
    arms: List[Tuple[str, str]] = [(h_mode, v_mode)]
    arms += [(f"arm{j}_H", f"arm{j}_V") for j in range(2, n + 1)]
    ancillas = tuple(m for arm in arms[1:] for m in arm)
    elements: List[OpticalElement] = []
    for i in range(n - 1, 0, -1):
        bs = polarization_beamsplitter(1.0 / (i + 1), arms[0], arms[i])
        elements.append(replace(bs, name=f"BS{i}(R=1/{i + 1})"))
    for j in range(1, n + 1):
        elements.append(phase_shifter(j, n, arms[j - 1][1]))
    for j in range(1, n + 1):
        elements.append(replace(hwp(math.radians(22.5), arms[j - 1]), name=f"PBS+-{j}"))
    detectors = tuple((f"D{j}", arms[j - 1][0]) for j in range(1, n + 1))
    return DetectionNetwork(
        input_modes=(h_mode, v_mode),
        elements=tuple(elements),
        detectors=detectors,
        ancilla_modes=ancillas,
        name=f"noon{n}",
    )


def projector_state(n: int, layout_modes: Tuple[str, str] = ("S_H", "S_V"), cutoff: int | None = None) -> FockVector:
    """Normalized (|N>_H - |N>_V)/sqrt(2) on two polarization modes; |H>-|V> for N=1."""
    layout = ModeLayout(layout_modes, cutoff if cutoff is not None else max(n, 1))
    s = 1 / math.sqrt(2)
    return from_terms(layout, {(n, 0): s, (0, n): -s})
