"""Truncated multimode Fock space.

States are stored densely: one complex amplitude per occupation tuple
``(n_1, ..., n_m)`` with every ``n_k <= cutoff``.  The flat ordering is
lexicographic in the occupation tuple following the layout order, which is
exactly numpy's C order for an array of shape ``(cutoff + 1,) * m``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Mapping, Sequence, Tuple

import numpy as np

ATOL = 1e-10


class LayoutError(ValueError):
    """Raised for unknown, duplicated or mismatched mode labels."""


@dataclass(frozen=True)
class ModeLayout:
    modes: Tuple[str, ...]
    cutoff: int

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(set(self.modes)) != len(self.modes):
            raise LayoutError(f"duplicate mode labels in {self.modes}")
        if not self.modes:
            raise LayoutError("a layout needs at least one mode")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise LayoutError(f"cutoff must be an integer >= 1, got {self.cutoff}")
        object.__setattr__(self, "cutoff", int(self.cutoff))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cutoff + 1,) * len(self.modes)

    @property
    def dim(self) -> int:
        return (self.cutoff + 1) ** len(self.modes)

    def index(self, label: str) -> int:
        try:
            return self.modes.index(label)
        except ValueError:
            raise LayoutError(f"unknown mode {label!r}; layout has {self.modes}") from None

    def with_cutoff(self, cutoff: int) -> "ModeLayout":
        return ModeLayout(self.modes, cutoff)

    def basis(self) -> Iterator[Tuple[int, ...]]:
        """Occupation tuples in storage order."""
        return itertools.product(range(self.cutoff + 1), repeat=len(self.modes))


@dataclass(frozen=True, eq=False)
class FockVector:
    """Complex amplitudes over a truncated Fock basis.

    ``truncation_loss`` accumulates the squared norm discarded whenever an
    operation would have pushed a component past the cutoff.
    """

    layout: ModeLayout
    amplitudes: np.ndarray
    truncation_loss: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != self.layout.shape:
            if amps.size != self.layout.dim:
                raise LayoutError(
                    f"amplitude array of size {amps.size} does not fit layout of dim {self.layout.dim}"
                )
            amps = amps.reshape(self.layout.shape)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    # -- basic queries -------------------------------------------------------

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def amplitude(self, occupation: Mapping[str, int] | Sequence[int]) -> complex:
        idx = _occupation_index(self.layout, occupation)
        if any(n > self.layout.cutoff for n in idx):
            return 0j
        return complex(self.amplitudes[idx])

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def nonzero(self, atol: float = 0.0) -> Iterator[Tuple[Tuple[int, ...], complex]]:
        """Yield ``(occupation, amplitude)`` for every amplitude above ``atol``."""
        for idx in zip(*np.nonzero(np.abs(self.amplitudes) > atol)):
            occ = tuple(int(i) for i in idx)
            yield occ, complex(self.amplitudes[occ])

    def photon_number(self, modes: Iterable[str] | None = None) -> np.ndarray:
        """Total occupation of ``modes`` for every basis element (array in layout shape)."""
        labels = self.layout.modes if modes is None else tuple(modes)
        grids = np.indices(self.layout.shape)
        return sum(grids[self.layout.index(m)] for m in labels)

    def normalize(self) -> "FockVector":
        n = self.norm()
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return FockVector(self.layout, self.amplitudes / n, self.truncation_loss)

    def __repr__(self):
        terms = [f"{amp:.4g}|{','.join(map(str, occ))}>" for occ, amp in self.nonzero(1e-12)]
        head = " + ".join(terms[:6]) + (" + ..." if len(terms) > 6 else "")
        return f"FockVector({','.join(self.layout.modes)}; {head or '0'})"


def _occupation_index(layout: ModeLayout, occupation) -> Tuple[int, ...]:
    if isinstance(occupation, Mapping):
        unknown = set(occupation) - set(layout.modes)
        if unknown:
            raise LayoutError(f"unknown modes {sorted(unknown)}")
        return tuple(int(occupation.get(m, 0)) for m in layout.modes)
    occ = tuple(int(n) for n in occupation)
    if len(occ) != len(layout.modes):
        raise LayoutError(f"occupation {occ} does not match {len(layout.modes)} modes")
    if any(n < 0 for n in occ):
        raise ValueError(f"negative occupation in {occ}")
    return occ


# -- constructors ---------------------------------------------------------------


def vacuum(layout: ModeLayout) -> FockVector:
    amps = np.zeros(layout.shape, dtype=complex)
    amps[(0,) * len(layout.modes)] = 1.0
    return FockVector(layout, amps)


def basis_state(layout: ModeLayout, occupation) -> FockVector:
    idx = _occupation_index(layout, occupation)
    if any(n > layout.cutoff for n in idx):
        raise ValueError(f"occupation {idx} exceeds cutoff {layout.cutoff}")
    amps = np.zeros(layout.shape, dtype=complex)
    amps[idx] = 1.0
    return FockVector(layout, amps)


def from_terms(layout: ModeLayout, terms: Mapping[Tuple[int, ...], complex]) -> FockVector:
    """Build a (not necessarily normalized) state from ``{occupation: amplitude}``."""
    amps = np.zeros(layout.shape, dtype=complex)
    for occ, amp in terms.items():
        idx = _occupation_index(layout, occ)
        if any(n > layout.cutoff for n in idx):
            raise ValueError(f"occupation {idx} exceeds cutoff {layout.cutoff}")
        amps[idx] += amp
    return FockVector(layout, amps)


# -- ladder operators -----------------------------------------------------------


def create(state: FockVector, mode: str) -> FockVector:
    """Apply a^dagger to ``mode``.

    Components already at the cutoff in ``mode`` are dropped; their prior
    weight is added to ``truncation_loss``.
    """
    k = state.layout.index(mode)
    c = state.layout.cutoff
    src = np.moveaxis(state.amplitudes, k, 0)
    out = np.zeros_like(src)
    factors = np.sqrt(np.arange(1, c + 1)).reshape((-1,) + (1,) * (src.ndim - 1))
    out[1:] = factors * src[:-1]
    lost = float(np.sum(np.abs(src[c]) ** 2))
    return FockVector(state.layout, np.moveaxis(out, 0, k), state.truncation_loss + lost)


def annihilate(state: FockVector, mode: str) -> FockVector:
    k = state.layout.index(mode)
    c = state.layout.cutoff
    src = np.moveaxis(state.amplitudes, k, 0)
    out = np.zeros_like(src)
    factors = np.sqrt(np.arange(1, c + 1)).reshape((-1,) + (1,) * (src.ndim - 1))
    out[:-1] = factors * src[1:]
    return FockVector(state.layout, np.moveaxis(out, 0, k), state.truncation_loss)


# -- composition ------------------------------------------------------------------


def pad_cutoff(state: FockVector, cutoff: int) -> FockVector:
    """Embed ``state`` in a layout with a larger cutoff."""
    if cutoff < state.layout.cutoff:
        raise ValueError("pad_cutoff cannot shrink the cutoff")
    if cutoff == state.layout.cutoff:
        return state
    layout = state.layout.with_cutoff(cutoff)
    amps = np.zeros(layout.shape, dtype=complex)
    amps[(slice(0, state.layout.cutoff + 1),) * len(layout.modes)] = state.amplitudes
    return FockVector(layout, amps, state.truncation_loss)


def tensor(s1: FockVector, s2: FockVector) -> FockVector:
    """Tensor product; modes of ``s1`` come first in the merged layout."""
    overlap = set(s1.layout.modes) & set(s2.layout.modes)
    if overlap:
        raise LayoutError(f"cannot tensor states sharing modes {sorted(overlap)}")
    cutoff = max(s1.layout.cutoff, s2.layout.cutoff)
    a, b = pad_cutoff(s1, cutoff), pad_cutoff(s2, cutoff)
    layout = ModeLayout(s1.layout.modes + s2.layout.modes, cutoff)
    amps = np.multiply.outer(a.amplitudes, b.amplitudes)
    loss = s1.truncation_loss + s2.truncation_loss
    return FockVector(layout, amps, loss)


def reorder(state: FockVector, modes: Sequence[str]) -> FockVector:
    """Permute the layout to ``modes`` (same label set)."""
    if sorted(modes) != sorted(state.layout.modes):
        raise LayoutError(f"{tuple(modes)} is not a permutation of {state.layout.modes}")
    perm = [state.layout.index(m) for m in modes]
    layout = ModeLayout(tuple(modes), state.layout.cutoff)
    return FockVector(layout, np.transpose(state.amplitudes, perm), state.truncation_loss)


def inner(s1: FockVector, s2: FockVector) -> complex:
    """<s1|s2> without normalization."""
    if s1.layout != s2.layout:
        raise LayoutError(f"layouts differ: {s1.layout} vs {s2.layout}")
    return complex(np.vdot(s1.amplitudes, s2.amplitudes))


def fidelity(s1: FockVector, s2: FockVector) -> float:
    """|<s1|s2>|^2 with both states normalized."""
    ov = inner(s1, s2)
    return float(min(1.0, abs(ov) ** 2 / (s1.norm_squared() * s2.norm_squared())))


def fix_global_phase(state: FockVector) -> FockVector:
    """Rotate so the largest-magnitude amplitude is real and positive."""
    flat = state.amplitudes.ravel()
    k = int(np.argmax(np.abs(flat)))
    if flat[k] == 0:
        return state
    phase = flat[k] / abs(flat[k])
    return FockVector(state.layout, state.amplitudes / phase, state.truncation_loss)


# -- text serialization -------------------------------------------------------------


def dumps(state: FockVector, atol: float = 0.0) -> str:
    """One header line, then ``n1,...,nm<TAB>re<TAB>im`` per nonzero amplitude."""
    lines = [f"# modes={','.join(state.layout.modes)}\tcutoff={state.layout.cutoff}"]
    for occ, amp in state.nonzero(atol):
        lines.append(f"{','.join(map(str, occ))}\t{amp.real:.17g}\t{amp.imag:.17g}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> FockVector:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing '# modes=...' header line")
    header: Dict[str, str] = {}
    for part in lines[0].lstrip("#").strip().split("\t"):
        key, _, value = part.partition("=")
        header[key.strip()] = value.strip()
    try:
        layout = ModeLayout(tuple(header["modes"].split(",")), int(header["cutoff"]))
    except KeyError as exc:
        raise ValueError(f"state header lacks {exc.args[0]!r}") from None
    terms = {}
    for lineno, ln in enumerate(lines[1:], start=2):
        fields = ln.split("\t")
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        occ = tuple(int(n) for n in fields[0].split(","))
        terms[occ] = complex(float(fields[1]), float(fields[2]))
    return from_terms(layout, terms)
