"""Tests for the multi-objective core.

The exact sweep is checked against two independent oracles: a unit-grid
counting oracle for integer coordinates and a plain Monte-Carlo sampler
(deliberately separate from the estimator shipped in moncae.moo).
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moncae.moo import (
    ArchiveEntry,
    InvalidPointError,
    InvalidShapeError,
    ObjectivePoint,
    ParetoArchive,
    ReferencePoint,
    archive_insert,
    chvi,
    dominates,
    hypervolume,
    hypervolume_monte_carlo,
    level_of_compression,
)

REF = ReferencePoint(4.0, 12.0)


def grid_hypervolume(points, ref):
    """Counting oracle: dominated unit cells of the [0, ref) integer grid."""
    r1, r2 = int(ref.rec_loss_ref), int(ref.loc_ref)
    count = 0
    for i in range(r1):
        for j in range(r2):
            if any(p[0] <= i and p[1] <= j for p in points):
                count += 1
    return float(count)


def mc_hypervolume(points, ref, n=200_000, seed=0):
    """Sampling oracle; returns (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, ref.rec_loss_ref, n)
    ys = rng.uniform(0.0, ref.loc_ref, n)
    hit = np.zeros(n, dtype=bool)
    for p1, p2 in points:
        hit |= (xs >= p1) & (ys >= p2)
    p_hat = hit.mean()
    box = ref.rec_loss_ref * ref.loc_ref
    return box * p_hat, box * math.sqrt(p_hat * (1.0 - p_hat) / n)


coord = st.floats(min_value=0.0, max_value=13.0, allow_nan=False, allow_infinity=False)
point_lists = st.lists(st.tuples(coord, coord), min_size=0, max_size=8)


class TestLevelOfCompression:
    def test_paper_bottlenecks(self):
        assert level_of_compression((4, 4, 3)) == pytest.approx(1.6812, abs=1e-3)
        assert level_of_compression((8, 8, 8)) == pytest.approx(2.7093, abs=1e-3)

    def test_single_element(self):
        assert level_of_compression((1, 1, 1)) == 0.0

    def test_matches_log10_product(self):
        for shape in [(7, 7, 8), (28, 28, 1), (2,), (3, 5)]:
            assert level_of_compression(shape) == pytest.approx(
                math.log10(math.prod(shape)), abs=1e-12
            )

    def test_invalid_shapes(self):
        with pytest.raises(InvalidShapeError):
            level_of_compression(())
        with pytest.raises(InvalidShapeError):
            level_of_compression((4, 0, 3))
        with pytest.raises(InvalidShapeError):
            level_of_compression((4, -1))


class TestDominates:
    def test_strict(self):
        assert dominates((1, 1), (2, 2))
        assert not dominates((2, 2), (1, 1))

    def test_incomparable(self):
        assert not dominates((1, 3), (3, 1))
        assert not dominates((3, 1), (1, 3))

    def test_equal_points(self):
        assert not dominates((1, 1), (1, 1))

    def test_weak_edge(self):
        assert dominates((1, 2), (1, 3))
        assert not dominates((1, 3), (1, 2))

    def test_accepts_objective_points(self):
        assert dominates(ObjectivePoint(1, 1), ObjectivePoint(2, 2))


class TestHypervolume:
    def test_empty(self):
        assert hypervolume([], REF) == 0.0

    def test_single_rectangle(self):
        assert hypervolume([(1, 1)], REF) == pytest.approx(33.0, abs=1e-12)

    def test_two_point_sweep(self):
        assert hypervolume([(1, 6), (2, 2)], REF) == pytest.approx(26.0, abs=1e-12)

    def test_out_of_box_points_ignored(self):
        assert hypervolume([(5, 1)], REF) == 0.0
        assert hypervolume([(1, 13)], REF) == 0.0
        assert hypervolume([(4, 1)], REF) == 0.0  # boundary contributes nothing
        assert hypervolume([(1, 1), (5, 13)], REF) == 33.0

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidPointError):
            hypervolume([(math.nan, 1.0)], REF)
        with pytest.raises(InvalidPointError):
            hypervolume([(1.0, math.inf)], REF)

    def test_grid_oracle_exact_agreement(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = rng.integers(0, 9)
            pts = [(int(a), int(b)) for a, b in rng.integers(0, 14, size=(n, 2))]
            assert hypervolume(pts, REF) == grid_hypervolume(pts, REF)

    def test_mc_oracle_agreement(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            n = int(rng.integers(1, 9))
            pts = [tuple(x) for x in rng.uniform(0, [4.0, 12.0], size=(n, 2))]
            exact = hypervolume(pts, REF)
            est, se = mc_hypervolume(pts, REF, n=200_000, seed=trial)
            assert abs(exact - est) <= 3.0 * max(se, 1e-12)

    @given(point_lists)
    @settings(max_examples=200)
    def test_permutation_and_duplicate_invariance(self, pts):
        base = hypervolume(pts, REF)
        assert hypervolume(list(reversed(pts)), REF) == base
        assert hypervolume(pts + pts, REF) == base

    @given(point_lists, st.tuples(coord, coord))
    @settings(max_examples=200)
    def test_monotone_under_insertion(self, pts, extra):
        before = hypervolume(pts, REF)
        after = hypervolume(pts + [extra], REF)
        assert after >= before
        if any(dominates(p, extra) or tuple(p) == extra for p in pts):
            assert after == before
        if extra[0] >= REF.rec_loss_ref or extra[1] >= REF.loc_ref:
            assert after == before


class TestChvi:
    def test_dominated_point_contributes_zero(self):
        assert chvi(1, [(1, 1), (2, 2)], REF) == 0.0

    def test_two_point_contributions(self):
        pts = [(1, 6), (2, 2)]
        assert chvi(0, pts, REF) == pytest.approx(6.0, abs=1e-12)
        assert chvi(1, pts, REF) == pytest.approx(8.0, abs=1e-12)

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            chvi(2, [(1, 1), (2, 2)], REF)
        with pytest.raises(IndexError):
            chvi(-1, [(1, 1)], REF)

    def test_duplicate_points_each_score_zero(self):
        pts = [(1, 1), (1, 1)]
        assert chvi(0, pts, REF) == 0.0
        assert chvi(1, pts, REF) == 0.0

    @given(point_lists.filter(lambda ps: len(ps) >= 1))
    @settings(max_examples=200)
    def test_removal_identity(self, pts):
        total = hypervolume(pts, REF)
        for i in range(len(pts)):
            rest = pts[:i] + pts[i + 1 :]
            assert abs(chvi(i, pts, REF) - (total - hypervolume(rest, REF))) <= 1e-12

    @given(point_lists.filter(lambda ps: len(ps) >= 1))
    @settings(max_examples=200)
    def test_contribution_sum_bounded(self, pts):
        total = hypervolume(pts, REF)
        contributions = sum(chvi(i, pts, REF) for i in range(len(pts)))
        assert contributions <= total + 1e-9

    def test_single_point_equality(self):
        # One in-box point: its exclusive contribution is the whole area.
        assert chvi(0, [(2, 3)], REF) == hypervolume([(2, 3)], REF)


class TestMonteCarloEstimator:
    def test_empty(self):
        assert hypervolume_monte_carlo([], (4, 12), n_samples=1000, seed=0) == 0.0

    def test_agrees_with_exact_2d(self):
        pts = [(1, 6), (2, 2)]
        est = hypervolume_monte_carlo(pts, (4.0, 12.0), n_samples=400_000, seed=3)
        assert est == pytest.approx(26.0, rel=0.01)

    def test_three_objectives(self):
        # Single box: exact volume (2-1)*(2-1)*(2-1) relative to ref (2,2,2).
        est = hypervolume_monte_carlo([(1.0, 1.0, 1.0)], (2.0, 2.0, 2.0), n_samples=200_000, seed=5)
        assert est == pytest.approx(1.0, rel=0.05)

    def test_deterministic_in_seed(self):
        pts = [(1, 2), (2, 1)]
        a = hypervolume_monte_carlo(pts, (4, 12), n_samples=50_000, seed=9)
        b = hypervolume_monte_carlo(pts, (4, 12), n_samples=50_000, seed=9)
        assert a == b


class TestParetoArchive:
    def test_dominated_insert_rejected(self):
        archive = ParetoArchive()
        archive.insert(ObjectivePoint(1, 1), "a", 0)
        assert not archive.insert(ObjectivePoint(2, 2), "b", 0)
        assert [e.genome_id for e in archive.entries] == ["a"]

    def test_dominating_insert_evicts(self):
        archive = ParetoArchive()
        archive.insert(ObjectivePoint(2, 2), "a", 0)
        assert archive.insert(ObjectivePoint(1, 1), "b", 1)
        assert [e.genome_id for e in archive.entries] == ["b"]

    def test_incomparable_points_coexist(self):
        archive = ParetoArchive()
        archive.insert(ObjectivePoint(1, 3), "a", 0)
        archive.insert(ObjectivePoint(3, 1), "b", 0)
        assert len(archive) == 2

    def test_duplicate_point_and_id_rejected(self):
        archive = ParetoArchive()
        archive.insert(ObjectivePoint(1, 1), "a", 0)
        assert not archive.insert(ObjectivePoint(1, 1), "a", 3)
        assert len(archive) == 1

    def test_equal_point_different_id_coexists(self):
        archive = ParetoArchive()
        archive.insert(ObjectivePoint(1, 1), "a", 0)
        assert archive.insert(ObjectivePoint(1, 1), "b", 0)
        assert len(archive) == 2

    def test_functional_wrapper(self):
        archive = archive_insert(ParetoArchive(), ObjectivePoint(2, 2), "a", 0)
        assert len(archive) == 1

    @given(st.lists(st.tuples(coord, coord), min_size=1, max_size=30))
    @settings(max_examples=100)
    def test_hvi_monotone_under_inserts(self, pts):
        archive = ParetoArchive()
        last = 0.0
        for k, (r, l) in enumerate(pts):
            archive.insert(ObjectivePoint(r, l), f"g{k}", k)
            hv = archive.hypervolume(REF)
            assert hv >= last - 1e-12
            last = hv

    @given(st.lists(st.tuples(coord, coord), min_size=0, max_size=20))
    @settings(max_examples=100)
    def test_mutual_non_domination_invariant(self, pts):
        archive = ParetoArchive()
        for k, (r, l) in enumerate(pts):
            archive.insert(ObjectivePoint(r, l), f"g{k}", 0)
        for a in archive.entries:
            for b in archive.entries:
                assert not dominates(a.point, b.point)


class TestObjectivePointValidation:
    def test_rejects_nan(self):
        with pytest.raises(InvalidPointError):
            ObjectivePoint(math.nan, 1.0)

    def test_rejects_negative(self):
        with pytest.raises(InvalidPointError):
            ObjectivePoint(-0.1, 1.0)
        with pytest.raises(InvalidPointError):
            ObjectivePoint(0.1, -1.0)

    def test_reference_must_be_positive(self):
        with pytest.raises(InvalidPointError):
            ReferencePoint(0.0, 12.0)
