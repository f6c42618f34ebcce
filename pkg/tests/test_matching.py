"""Assignment tests against a brute-force permutation oracle."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylefield.errors import DegenerateRegionError, DomainError, MatchingModeError
from stylefield.matching import (
    cost_matrix,
    injective_matching,
    load_matching,
    match_regions,
    parse_matching_payload,
    region_descriptors,
    save_matching,
    surjective_matching,
    validate_assignment,
)


def brute_force_injective(costs):
    """Enumerate all injective assignments; min cost, then smallest columns."""
    n, m = costs.shape
    totals = [
        (math.fsum(costs[i, perm[i]] for i in range(n)), perm)
        for perm in itertools.permutations(range(m), n)
    ]
    min_total = min(t for t, _ in totals)
    tol = 1e-12 * max(1.0, abs(min_total))
    best = min(p for t, p in totals if t <= min_total + tol)
    return dict(enumerate(best)), min_total


class TestInjective:
    def test_golden_two_by_three(self):
        result = injective_matching(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))
        assert result.assignment == {0: 1, 1: 0}
        assert result.total_cost == pytest.approx(4.0, abs=1e-12)
        assert result.mode == "injective"

    def test_tie_break_prefers_smallest_columns(self):
        result = injective_matching(np.ones((2, 2)))
        assert result.assignment == {0: 0, 1: 1}
        result = injective_matching(np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 5.0]]))
        assert result.assignment == {0: 0, 1: 1}

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(150):
            c = int(rng.integers(1, 6))
            s = int(rng.integers(c, 8))
            costs = rng.random((c, s))
            got = injective_matching(costs)
            want_assign, want_cost = brute_force_injective(costs)
            assert got.assignment == want_assign
            assert got.total_cost == pytest.approx(want_cost, abs=1e-12)

    def test_matches_brute_force_with_heavy_ties(self):
        rng = np.random.default_rng(7)
        for _ in range(150):
            c = int(rng.integers(1, 5))
            s = int(rng.integers(c, 7))
            costs = rng.choice([0.0, 0.25, 0.5], size=(c, s))
            got = injective_matching(costs)
            want_assign, want_cost = brute_force_injective(costs)
            assert got.assignment == want_assign
            assert got.total_cost == pytest.approx(want_cost, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 10**6),
        c=st.integers(1, 4),
        extra=st.integers(0, 3),
    )
    def test_property_vs_oracle(self, seed, c, extra):
        rng = np.random.default_rng(seed)
        costs = rng.normal(size=(c, c + extra))
        got = injective_matching(costs)
        want_assign, want_cost = brute_force_injective(costs)
        assert got.assignment == want_assign
        assert got.total_cost == pytest.approx(want_cost, abs=1e-9)

    def test_rejects_more_rows_than_columns(self):
        with pytest.raises(MatchingModeError):
            injective_matching(np.ones((3, 2)))

    def test_rejects_bad_matrices(self):
        with pytest.raises(DomainError):
            injective_matching(np.empty((0, 3)))
        with pytest.raises(DomainError):
            injective_matching(np.array([[1.0, np.inf]]))
        with pytest.raises(DomainError):
            injective_matching(np.ones(4))


class TestSurjective:
    def test_golden_three_by_two(self):
        costs = np.array([[0.1, 0.9], [0.8, 0.2], [0.3, 0.4]])
        result = surjective_matching(costs)
        assert result.assignment == {0: 0, 1: 1, 2: 0}
        assert result.total_cost == pytest.approx(0.6, abs=1e-12)
        assert result.mode == "surjective"

    def test_golden_with_two_residual_passes(self):
        costs = np.array(
            [[0.0, 1.0], [1.0, 0.0], [0.2, 0.9], [0.8, 0.1], [0.5, 0.6]]
        )
        result = surjective_matching(costs)
        assert result.assignment == {0: 0, 1: 1, 2: 0, 3: 1, 4: 0}
        assert result.total_cost == pytest.approx(0.8, abs=1e-12)

    def test_structural_properties(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            s = int(rng.integers(1, 5))
            c = int(rng.integers(s, s + 6))
            costs = rng.random((c, s))
            result = surjective_matching(costs)
            assert sorted(result.assignment) == list(range(c))
            assert set(result.assignment.values()) == set(range(s))

    def test_square_case_reduces_to_injective(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            n = int(rng.integers(1, 6))
            costs = rng.random((n, n))
            assert surjective_matching(costs).assignment == injective_matching(costs).assignment

    def test_rejects_fewer_rows_than_columns(self):
        with pytest.raises(MatchingModeError):
            surjective_matching(np.ones((2, 3)))


class TestMatchRegions:
    def test_auto_mode_selection(self):
        assert match_regions(np.ones((2, 3))).mode == "injective"
        assert match_regions(np.ones((3, 2))).mode == "surjective"
        assert match_regions(np.ones((2, 2))).mode == "injective"

    def test_explicit_mode_mismatch_raises(self):
        with pytest.raises(MatchingModeError):
            match_regions(np.ones((3, 2)), mode="injective")
        with pytest.raises(MatchingModeError):
            match_regions(np.ones((2, 3)), mode="surjective")
        with pytest.raises(MatchingModeError):
            match_regions(np.ones((2, 2)), mode="weird")


class TestDescriptors:
    def test_hand_built_descriptors(self):
        features = np.zeros((2, 2, 3))
        features[0, 0] = [1, 0, 0]
        features[0, 1] = [0, 1, 0]
        features[1, :] = [0, 0, 2]
        labels = np.array([[0, 0], [1, 1]])
        means, centroids = region_descriptors(features, labels, 2)
        np.testing.assert_allclose(means[0], [0.5, 0.5, 0.0], atol=1e-12)
        np.testing.assert_allclose(means[1], [0.0, 0.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(centroids[0], [0.5, 0.25], atol=1e-12)
        np.testing.assert_allclose(centroids[1], [0.5, 0.75], atol=1e-12)

    def test_full_image_centroid_is_half(self):
        rng = np.random.default_rng(0)
        # Power-of-two sizes divide exactly, so the mean is bit-exact there.
        _, centroids = region_descriptors(rng.random((4, 8, 4)), np.zeros((4, 8), dtype=int), 1)
        assert centroids[0, 0] == 0.5
        assert centroids[0, 1] == 0.5
        _, centroids = region_descriptors(rng.random((5, 9, 4)), np.zeros((5, 9), dtype=int), 1)
        np.testing.assert_allclose(centroids[0], 0.5, atol=1e-12)

    def test_unassigned_pixels_are_ignored(self):
        features = np.ones((2, 2, 1))
        features[0, 0, 0] = 5.0
        labels = np.array([[-1, 0], [0, 0]])
        means, _ = region_descriptors(features, labels, 1)
        assert means[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_empty_region_raises(self):
        features = np.ones((2, 2, 1))
        labels = np.zeros((2, 2), dtype=int)
        with pytest.raises(DegenerateRegionError):
            region_descriptors(features, labels, 2)


class TestCostMatrix:
    def test_feature_distance_extremes(self):
        means_a = np.array([[1.0, 0.0], [0.0, 3.0]])
        means_b = np.array([[2.0, 0.0], [0.0, -1.0]])
        cents = np.full((2, 2), 0.5)
        w = cost_matrix(means_a, cents, means_b, cents, beta=0.0)
        assert w[0, 0] == pytest.approx(0.0, abs=1e-9)  # parallel
        assert w[1, 0] == pytest.approx(1.0, abs=1e-9)  # orthogonal
        assert w[1, 1] == pytest.approx(2.0, abs=1e-9)  # opposite
        assert np.all(w >= 0.0) and np.all(w <= 2.0)

    def test_beta_scales_centroid_term(self):
        rng = np.random.default_rng(1)
        means = rng.random((3, 4))
        ca = rng.random((3, 2))
        cb = rng.random((2, 2))
        w0 = cost_matrix(means, ca, means[:2], cb, beta=0.0)
        w2 = cost_matrix(means, ca, means[:2], cb, beta=2.0)
        patch = np.linalg.norm(ca[:, None, :] - cb[None, :, :], axis=-1)
        np.testing.assert_allclose(w2 - w0, 2.0 * patch, atol=1e-12)

    def test_zero_feature_vector_is_finite(self):
        means = np.zeros((1, 3))
        cents = np.full((1, 2), 0.5)
        w = cost_matrix(means, cents, np.ones((1, 3)), cents)
        assert np.all(np.isfinite(w))

    def test_negative_beta_rejected(self):
        cents = np.zeros((1, 2))
        with pytest.raises(DomainError):
            cost_matrix(np.ones((1, 2)), cents, np.ones((1, 2)), cents, beta=-1.0)


class TestMatchingFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "matching.json"
        save_matching(path, {0: 1, 1: 0, 2: 1}, 3, 2, "surjective")
        assignment, c, s, mode = load_matching(path)
        assert assignment == {0: 1, 1: 0, 2: 1}
        assert (c, s, mode) == (3, 2, "surjective")

    def test_custom_mode_allows_any_complete_map(self, tmp_path):
        path = tmp_path / "matching.json"
        save_matching(path, {0: 1, 1: 1}, 2, 3, "custom")
        assignment, _, _, mode = load_matching(path)
        assert assignment == {0: 1, 1: 1}
        assert mode == "custom"

    def test_validation_rejects_incomplete_or_out_of_range(self):
        with pytest.raises(DomainError):
            validate_assignment({0: 0}, 2, 2, "custom")
        with pytest.raises(DomainError):
            validate_assignment({0: 0, 1: 5}, 2, 2, "custom")
        with pytest.raises(DomainError, match=r"style region 0: scene regions 0 and 1"):
            validate_assignment({0: 0, 1: 0}, 2, 2, "injective")
        with pytest.raises(DomainError, match=r"style region 2: scene regions 1 and 3"):
            validate_assignment({0: 0, 1: 2, 2: 1, 3: 2}, 4, 4, "injective")
        with pytest.raises(DomainError):
            validate_assignment({0: 0, 1: 0}, 2, 2, "surjective")
        with pytest.raises(MatchingModeError):
            validate_assignment({0: 0}, 1, 1, "other")

    def test_load_rejects_tampered_files(self, tmp_path):
        path = tmp_path / "matching.json"
        save_matching(path, {0: 0}, 1, 1, "injective")
        good = path.read_text()

        path.write_text("not json")
        with pytest.raises(DomainError):
            load_matching(path)

        path.write_text(good.replace('"version": 1', '"version": 99'))
        with pytest.raises(DomainError):
            load_matching(path)

        with pytest.raises(DomainError):
            parse_matching_payload({"version": 1, "mode": "injective"})
        with pytest.raises(DomainError):
            parse_matching_payload(
                {
                    "version": 1,
                    "mode": "injective",
                    "num_scene_regions": 1,
                    "num_style_regions": 1,
                    "assignment": {"zero": 0},
                }
            )
