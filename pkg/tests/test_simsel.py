import numpy as np
import pytest

from protoshot.embedstore import PatchMatrix
from protoshot.errors import DimensionMismatch, EmptySubset
from protoshot.simsel import bgap, score_against, top_k

from conftest import random_unit_rows


def matrix(rows) -> PatchMatrix:
    return PatchMatrix(np.asarray(rows, dtype=np.float32))


def sort_then_truncate(scores, k):
    """Independent selection oracle: full sort by (-score, index), truncate."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[: min(k, len(scores))]


class TestScoreAgainst:
    def test_aligned(self):
        assert score_against(matrix([[1, 0]]), np.array([1.0, 0.0]))[0] == 1.0

    def test_orthogonal(self):
        assert score_against(matrix([[1, 0]]), np.array([0.0, 1.0]))[0] == 0.0

    def test_plain_dot(self):
        out = score_against(matrix([[0.6, 0.8]]), np.array([0.8, 0.6]))
        assert out[0] == pytest.approx(0.96, abs=1e-7)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            score_against(matrix([[1, 0]]), np.array([1.0, 0.0, 0.0]))

    def test_length_and_dtype(self):
        rng = np.random.default_rng(0)
        bag = PatchMatrix(random_unit_rows(rng, 17, 5))
        out = score_against(bag, random_unit_rows(rng, 1, 5)[0])
        assert out.shape == (17,) and out.dtype == np.float64

    def test_unit_inputs_bounded(self):
        rng = np.random.default_rng(1)
        bag = PatchMatrix(random_unit_rows(rng, 200, 8))
        w = random_unit_rows(rng, 1, 8)[0]
        out = score_against(bag, w)
        assert np.all(np.abs(out) <= 1 + 1e-6)

    def test_linear_in_class_vector(self):
        rng = np.random.default_rng(2)
        bag = PatchMatrix(random_unit_rows(rng, 50, 6))
        w1 = rng.standard_normal(6)
        w2 = rng.standard_normal(6)
        for a, b in [(2.0, -0.5), (0.25, 3.0), (-1.5, -1.5)]:
            combined = score_against(bag, a * w1 + b * w2)
            split = a * score_against(bag, w1) + b * score_against(bag, w2)
            np.testing.assert_allclose(combined, split, rtol=0, atol=1e-9)


class TestTopK:
    def test_basic(self):
        sel = top_k(np.array([0.9, 0.1, 0.5]), 2)
        assert sel.indices.tolist() == [0, 2] and sel.effective_k == 2

    def test_tie_breaks_by_index(self):
        sel = top_k(np.array([0.5, 0.5, 0.1]), 1)
        assert sel.indices.tolist() == [0]

    def test_k_clamps(self):
        sel = top_k(np.array([0.3, 0.1]), 10)
        assert sel.effective_k == 2
        assert sorted(sel.indices.tolist()) == [0, 1]

    def test_full_k_is_permutation(self):
        rng = np.random.default_rng(3)
        scores = rng.standard_normal(31)
        sel = top_k(scores, 31)
        assert sorted(sel.indices.tolist()) == list(range(31))

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            top_k(np.array([1.0]), 0)

    def test_matches_sort_oracle(self):
        """1000 random score vectors, duplicates included, exact agreement."""
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            if rng.random() < 0.5:
                scores = rng.integers(0, 5, size=n) / 4.0  # heavy ties
            else:
                scores = rng.standard_normal(n)
            k = int(rng.integers(1, n + 4))
            sel = top_k(scores, k)
            assert sel.indices.tolist() == sort_then_truncate(list(scores), k)

    def test_selected_dominate_unselected(self):
        rng = np.random.default_rng(5)
        scores = rng.integers(0, 4, size=40) / 3.0
        sel = top_k(scores, 11)
        chosen = set(sel.indices.tolist())
        rest = [scores[i] for i in range(40) if i not in chosen]
        assert min(scores[i] for i in chosen) >= max(rest)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(3, 40))
            scores = rng.permutation(np.linspace(0.0, 1.0, n))  # all distinct
            k = int(rng.integers(1, n + 1))
            base = set(top_k(scores, k).indices.tolist())
            perm = rng.permutation(n)
            permuted = set(top_k(scores[perm], k).indices.tolist())
            assert {int(perm[i]) for i in permuted} == base


class TestBgap:
    def test_identical_rows(self):
        v = np.array([0.6, 0.8], dtype=np.float32)
        bag = matrix([v, v, v])
        np.testing.assert_array_equal(bgap(bag), v.astype(np.float64))

    def test_two_basis_rows(self):
        np.testing.assert_array_equal(bgap(matrix([[1, 0], [0, 1]])), [0.5, 0.5])

    def test_matches_naive_mean(self):
        """Random subsets vs a straight-line loop oracle."""
        rng = np.random.default_rng(7)
        bag = PatchMatrix(random_unit_rows(rng, 200, 12))
        rows = bag.values
        for _ in range(60):
            size = int(rng.integers(1, 200))
            subset = rng.choice(200, size=size, replace=False)
            naive = sum(rows[i].astype(np.float64) for i in subset) / len(subset)
            np.testing.assert_allclose(bgap(bag, subset), naive, rtol=0, atol=1e-12)

    def test_singleton_subset_exact(self):
        rng = np.random.default_rng(8)
        bag = PatchMatrix(random_unit_rows(rng, 9, 4))
        np.testing.assert_array_equal(bgap(bag, [5]), bag.values[5].astype(np.float64))

    def test_empty_subset(self):
        with pytest.raises(EmptySubset):
            bgap(matrix([[1, 0]]), [])

    def test_out_of_range_subset(self):
        with pytest.raises(IndexError):
            bgap(matrix([[1, 0]]), [1])

    def test_subset_order_irrelevant(self):
        rng = np.random.default_rng(9)
        bag = PatchMatrix(random_unit_rows(rng, 30, 5))
        subset = rng.choice(30, size=12, replace=False)
        shuffled = subset[rng.permutation(12)]
        assert np.array_equal(bgap(bag, subset), bgap(bag, shuffled))

    def test_norm_bounded_for_unit_rows(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            bag = PatchMatrix(random_unit_rows(rng, int(rng.integers(1, 50)), 7))
            assert np.linalg.norm(bgap(bag)) <= 1 + 1e-9

    def test_float64_output(self):
        assert bgap(matrix([[1, 0]])).dtype == np.float64
