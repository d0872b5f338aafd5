from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blochforge import bloch
from blochforge.grid import TorusGrid
from blochforge.modeset import (
    AssumptionReport,
    KPoint,
    ModeSelection,
    ModesetError,
    check_assumptions,
    closure_S3,
    enumerate_consistent_pairs_1d,
    enumerate_consistent_pairs_2d,
    index_sets,
    integer_shift,
    is_consistent,
    reversal_pairing,
)
from blochforge.potentials import PotentialSpec


def kp(*coords):
    return KPoint(coords)


def test_kpoint_reduction():
    assert kp("3/4") == kp("-1/4")
    assert kp("-1/2") == kp("1/2")  # -1/2 maps to +1/2
    assert kp("5/2", "0") == kp("1/2", "0")
    assert all(Fraction(-1, 2) < c <= Fraction(1, 2) for c in kp("17/5", "-9/8"))


def test_kpoint_rejects_irrational():
    with pytest.raises(ModesetError):
        KPoint((0.4390001223,))  # not an exact small fraction
    assert kp(0.25) == kp("1/4")  # exact dyadic floats are fine


def test_closure_fixed_point_and_pair():
    assert closure_S3([kp("0", "0")]) == [kp("0", "0")]
    pair = [kp("1/2", "0"), kp("0", "1/2")]
    assert closure_S3(pair) == pair  # consistent: M = N


def test_closure_third_pair_matches_bruteforce_oracle():
    stars = [kp("1/3", "0"), kp("-1/3", "0")]
    got = set(closure_S3(stars))
    # oracle: saturate combinations with plain fractions
    cur = {(Fraction(1, 3), Fraction(0)), (Fraction(-1, 3), Fraction(0))}

    def reduce(c):
        r = c - (c + Fraction(1, 2)).__floor__()
        return Fraction(1, 2) if r == Fraction(-1, 2) else r

    while True:
        new = {
            tuple(reduce(a[i] - b[i] + c[i]) for i in range(2))
            for a, b, c in product(cur, repeat=3)
        }
        if new <= cur:
            break
        cur |= new
    assert got == {KPoint(p) for p in cur}
    assert kp("0", "0") in got and len(got) == 3


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.fractions(min_value=-2, max_value=2, max_denominator=6),
            st.fractions(min_value=-2, max_value=2, max_denominator=6),
        ),
        min_size=1,
        max_size=3,
    )
)
def test_closure_idempotent_and_permutation_invariant(points):
    stars = [KPoint(p) for p in points]
    first = closure_S3(stars)
    assert set(closure_S3(first)) == set(first)  # idempotent
    assert set(closure_S3(stars[::-1])) == set(first)
    assert len(first) == len(set(first))  # duplicate-free


def test_consistency_examples():
    assert is_consistent([kp("1/2", "0"), kp("0", "1/2")])
    assert is_consistent([kp("1/4", "1/4"), kp("-1/4", "-1/4")])
    kc = Fraction(7, 16)
    four = [kp(kc, kc), kp(-kc, kc), kp(-kc, -kc), kp(kc, -kc)]
    assert not is_consistent(four)
    with pytest.raises(ModesetError):
        is_consistent([(0.439, 0.439)])  # irrational rejected at the type level


def test_consistency_matches_enumeration_oracle():
    # evaluate the definition directly for the 7/16 four-point set
    kc = Fraction(7, 16)
    four = [kp(kc, kc), kp(-kc, kc), kp(-kc, -kc), kp(kc, -kc)]
    star_set = set(four)
    combos = {
        KPoint([a[i] - b[i] + c[i] for i in range(2)])
        for a, b, c in product(four, repeat=3)
    }
    assert not combos <= star_set  # hence inconsistent


def test_reversal_pairing():
    assert reversal_pairing([kp("1/2", "0"), kp("0", "1/2")]) == (0, 1)
    assert reversal_pairing([kp("1/4", "1/4"), kp("-1/4", "-1/4")]) == (1, 0)
    with pytest.raises(ModesetError):
        reversal_pairing([kp("1/4", "0")])


def test_reversal_pairing_respects_bands():
    pts = [kp("1/4", "0"), kp("-1/4", "0")]
    assert reversal_pairing(pts, [1, 1]) == (1, 0)
    with pytest.raises(ModesetError):
        reversal_pairing(pts, [1, 2])


def test_index_sets_match_two_mode_structure():
    sel = ModeSelection.build(0.0, [("1/2", "0"), ("0", "1/2")], [2, 2])
    a1 = set(sel.index_sets_stars[0])
    assert a1 == {(0, 0, 0), (0, 1, 1), (1, 1, 0), (1, 0, 1)}
    a2 = set(sel.index_sets_stars[1])
    assert a2 == {(1, 1, 1), (1, 0, 0), (0, 0, 1), (0, 1, 0)}


def test_index_set_shifts_are_exact_integers():
    sel = ModeSelection.build(0.0, [("1/4", "1/4"), ("-1/4", "-1/4")], [1, 1])
    closure = list(sel.closure)
    for j, triples in enumerate(sel.index_sets_closure):
        for a, b, g in triples:
            shift = integer_shift(closure, a, b, g, j)
            assert all(isinstance(s, int) for s in shift)
    assert sel.consistent and sel.n_closure == 2


def test_inconsistent_selection_has_larger_closure():
    sel = ModeSelection.build(0.0, [("1/3", "0"), ("-1/3", "0")], [1, 1])
    assert sel.n_closure == 3 and not sel.consistent
    assert sel.closure[2] == kp("0", "0")


def test_enumerate_consistent_pairs():
    pairs = enumerate_consistent_pairs_2d()
    assert len(pairs) == 12
    assert tuple(sorted([kp("1/2", "0"), kp("0", "1/2")])) in pairs
    assert tuple(sorted([kp("1/4", "1/4"), kp("-1/4", "-1/4")])) in pairs
    assert tuple(sorted([kp("0", "0"), kp("1/2", "1/2")])) in pairs
    ones = enumerate_consistent_pairs_1d()
    assert ones == sorted(
        [
            tuple(sorted([kp("-1/4"), kp("1/4")])),
            tuple(sorted([kp("0"), kp("1/2")])),
        ]
    )


def test_selection_text_roundtrip():
    sel = ModeSelection.build(2.0344, [("1/2", "0"), ("0", "1/2")], [2, 2])
    back = ModeSelection.from_text(sel.to_text())
    assert back.stars == sel.stars
    assert back.bands == sel.bands
    assert back.omega_star == pytest.approx(sel.omega_star)


# ---- hypothesis checks against a computed band structure -------------------


@pytest.fixture(scope="module")
def free_bands():
    # zero potential: omega_n(k) are folded parabolas |k+m|^2, exact
    pot = PotentialSpec("zero")
    grid = TorusGrid(2, 16)
    sel = ModeSelection.build(0.0, [("1/4", "0"), ("0", "1/4")], [1, 1])
    ks = [p.as_floats() for p in closure_S3(list(sel.stars))]
    bs = bloch.band_structure(pot, grid, ks, 4, cutoff=4, refine=False)
    return pot, grid, bs


def test_check_assumptions_pass_and_fail(example_b, pot2d, grid128):
    sel = example_b.selection
    ks = [p.as_floats() for p in sel.closure]
    bs = bloch.band_structure(pot2d, grid128, ks, 4, cutoff=10, refine=False)
    report = check_assumptions(bs, sel, tol=1e-3)
    assert isinstance(report, AssumptionReport)
    assert report.all_pass, report.details

    # omitting one member of the level set pair: (H5) fails, the closure
    # still contains the reflected point which sits on the level set
    half = ModeSelection.build(example_b.omega_star, [("1/2", "0")], [2])
    assert half.n_closure == 1  # single high-symmetry point is closed
    # constructed (H3) violation: claim double multiplicity at a simple point
    doubled = ModeSelection.build(
        example_b.omega_star, [("1/2", "0"), ("1/2", "0")], [2, 3]
    )
    rep2 = check_assumptions(bs, doubled, tol=1e-3)
    assert not rep2.h3
    assert not rep2.h2  # band 3 there is far from omega*


def test_check_assumptions_h5_failure_generic_interior():
    """Free operator, omega* = 1/16 at k = (1/4, 0): the closure of the
    non-reflection-symmetric pair {(1/4,0),(0,1/4)} reaches other points of
    the |k| = 1/4 circle, which lie on the level set -> (H5) fails."""
    pot = PotentialSpec("zero")
    grid = TorusGrid(2, 16)
    stars = [("1/4", "0"), ("0", "1/4")]
    sel = ModeSelection.build(1.0 / 16.0, stars, [1, 1])
    assert sel.n_closure > 2
    ks = [p.as_floats() for p in sel.closure]
    bs = bloch.band_structure(pot, grid, ks, 4, cutoff=4, refine=False)
    report = check_assumptions(bs, sel, tol=1e-9)
    assert not report.h5
    assert not report.h6  # reflection of (1/4,0) missing too
    assert report.h2  # the stars themselves do lie on the level set


def test_check_assumptions_requires_closure_samples(example_b, pot2d, grid128):
    bs = bloch.band_structure(pot2d, grid128, [(0.5, 0.0)], 3, cutoff=8, refine=False)
    with pytest.raises(ModesetError):
        check_assumptions(bs, example_b.selection)
