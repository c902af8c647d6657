import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swnoon.fock import (
    FockVector,
    LayoutError,
    ModeLayout,
    annihilate,
    basis_state,
    create,
    dumps,
    fidelity,
    from_terms,
    inner,
    loads,
    pad_cutoff,
    reorder,
    tensor,
    vacuum,
)
from swnoon.herald import two_mode_squeezed

from conftest import layouts, states


def test_layout_rejects_duplicates_and_bad_cutoff():
    with pytest.raises(LayoutError):
        ModeLayout(("a", "a"), 2)
    with pytest.raises(LayoutError):
        ModeLayout(("a",), 0)


def test_vacuum_two_modes():
    v = vacuum(ModeLayout(("SWa", "SWb"), 2))
    assert v.amplitude((0, 0)) == 1
    assert sum(1 for _ in v.nonzero()) == 1
    assert v.norm() == 1


def test_vacuum_tensor_vacuum():
    a = vacuum(ModeLayout(("SWa",), 2))
    b = vacuum(ModeLayout(("SWb",), 2))
    assert np.array_equal(tensor(a, b).amplitudes, vacuum(ModeLayout(("SWa", "SWb"), 2)).amplitudes)


def test_create_ladder():
    lay = ModeLayout(("SWa", "SWb"), 3)
    one = create(vacuum(lay), "SWa")
    assert one.amplitude({"SWa": 1}) == pytest.approx(1)
    two = create(one, "SWa")
    assert two.amplitude({"SWa": 2}) == pytest.approx(math.sqrt(2))
    assert two.norm_squared() == pytest.approx(2)


def test_create_at_cutoff_is_lost():
    lay = ModeLayout(("SWa",), 2)
    s = from_terms(lay, {(2,): 0.6, (0,): 0.8})
    out = create(s, "SWa")
    assert out.amplitude((1,)) == pytest.approx(0.8)
    assert out.truncation_loss == pytest.approx(0.36)
    full = create(basis_state(lay, (2,)), "SWa")
    assert full.norm() == 0
    assert full.truncation_loss == pytest.approx(1.0)


def test_create_unknown_mode():
    with pytest.raises(LayoutError):
        create(vacuum(ModeLayout(("SWa",), 1)), "SWz")


def test_tensor_vacuum_with_single_excitation():
    a = vacuum(ModeLayout(("SWa",), 1))
    b = basis_state(ModeLayout(("SWb",), 1), (1,))
    assert tensor(a, b).amplitude((0, 1)) == 1


def test_tensor_overlapping_modes():
    s = vacuum(ModeLayout(("SWa",), 1))
    with pytest.raises(LayoutError):
        tensor(s, s)


def test_write_pair_matches_hand_expansion():
    # sqrt(chi)^(n+m) |n,n,m,m> / Z with Z = sum_{k<=c} chi^k per ensemble
    chi, c = 0.05, 3
    s = tensor(two_mode_squeezed(chi, c, ("SWa", "S_V")), two_mode_squeezed(chi, c, ("SWb", "S_H")))
    z = sum(chi**k for k in range(c + 1))
    expected = {
        (0, 0, 0, 0): 1.0,
        (1, 1, 0, 0): math.sqrt(chi),
        (0, 0, 1, 1): math.sqrt(chi),
        (1, 1, 1, 1): chi,
        (2, 2, 0, 0): chi,
        (0, 0, 2, 2): chi,
    }
    for occ, amp in expected.items():
        assert s.amplitude(occ) == pytest.approx(amp / z, abs=1e-14)
    assert s.amplitude((1, 0, 0, 0)) == 0


def test_fidelity_examples():
    lay = ModeLayout(("SWa", "SWb"), 1)
    ten, one = basis_state(lay, (1, 0)), basis_state(lay, (0, 1))
    sup = from_terms(lay, {(1, 0): 1, (0, 1): 1})
    assert fidelity(sup, sup) == pytest.approx(1)
    assert fidelity(ten, one) == 0
    assert fidelity(sup, ten) == pytest.approx(0.5)


def test_fidelity_layout_mismatch():
    with pytest.raises(LayoutError):
        fidelity(vacuum(ModeLayout(("a",), 1)), vacuum(ModeLayout(("b",), 1)))


@given(states(normalized=False))
def test_normalize_idempotent(s):
    n1 = s.normalize()
    assert abs(n1.norm() - 1) < 1e-12
    assert np.allclose(n1.normalize().amplitudes, n1.amplitudes, atol=1e-15)


@given(states(), st.data())
def test_commutator_with_headroom(s, data):
    mode = data.draw(st.sampled_from(s.layout.modes))
    # remove the top occupation so a^dagger never truncates
    k = s.layout.index(mode)
    amps = np.array(s.amplitudes)
    np.moveaxis(amps, k, 0)[s.layout.cutoff] = 0
    s = FockVector(s.layout, amps)
    lhs = annihilate(create(s, mode), mode).amplitudes - create(annihilate(s, mode), mode).amplitudes
    assert np.allclose(lhs, s.amplitudes, atol=1e-12)


@given(states(), st.data())
def test_truncation_accounting(s, data):
    mode = data.draw(st.sampled_from(s.layout.modes))
    out = create(s, mode)
    # weight of the components that had room to be raised, compared with the loss
    expected_keep = s.norm_squared() - out.truncation_loss
    n = s.photon_number([mode])
    assert expected_keep == pytest.approx(float(np.sum(s.probabilities()[n < s.layout.cutoff])), abs=1e-12)


@given(
    states(max_modes=2, max_cutoff=2),
    st.integers(0, 2**31),
    st.integers(0, 2**31),
)
def test_tensor_associative(s1, seed2, seed3):
    used = set(s1.layout.modes)
    free = [m for m in ("SWa", "SWb", "S_H", "S_V", "AS_H", "AS_V") if m not in used]
    c = s1.layout.cutoff
    r2, r3 = np.random.default_rng(seed2), np.random.default_rng(seed3)
    s2 = FockVector(ModeLayout((free[0],), c), r2.normal(size=c + 1)).normalize()
    s3 = FockVector(ModeLayout((free[1],), c), r3.normal(size=c + 1) * 1j).normalize()
    left, right = tensor(tensor(s1, s2), s3), tensor(s1, tensor(s2, s3))
    assert left.layout == right.layout
    assert np.allclose(left.amplitudes, right.amplitudes, atol=1e-12)
    assert left.norm() == pytest.approx(1, abs=1e-12)


@given(states())
def test_dumps_roundtrip(s):
    back = loads(dumps(s))
    assert back.layout == s.layout
    assert np.array_equal(back.amplitudes, s.amplitudes)


@given(states(max_modes=3))
def test_reorder_roundtrip(s):
    rev = reorder(s, s.layout.modes[::-1])
    assert np.array_equal(reorder(rev, s.layout.modes).amplitudes, s.amplitudes)
    assert inner(rev, rev) == pytest.approx(s.norm_squared())


@given(states(max_cutoff=2), st.integers(0, 2))
def test_pad_cutoff_preserves_amplitudes(s, extra):
    p = pad_cutoff(s, s.layout.cutoff + extra)
    assert p.norm() == pytest.approx(s.norm(), abs=1e-12)
    for occ, amp in s.nonzero():
        assert p.amplitude(occ) == amp


def test_serialization_is_lexicographic():
    lay = ModeLayout(("a", "b"), 1)
    s = from_terms(lay, {(1, 1): 0.5, (0, 1): 0.5, (1, 0): 0.5, (0, 0): 0.5})
    lines = dumps(s).splitlines()
    assert lines[0] == "# modes=a,b\tcutoff=1"
    assert [ln.split("\t")[0] for ln in lines[1:]] == ["0,0", "0,1", "1,0", "1,1"]
