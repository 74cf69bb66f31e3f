import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l0filter.clustering import Partition
from l0filter.evaluation import adjusted_rand_index, criterion_c

HAND = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


def scalar_criterion(points, labels, gamma=0.1):
    """Direct evaluation over point pairs with scalar arithmetic."""
    def kd(a, b):
        return 2.0 * (1.0 - math.exp(-gamma * sum((p - q) ** 2 for p, q in zip(a, b))))
    within, pairs, between = {}, {}, 0.0
    for i, j in combinations(range(len(points)), 2):
        if labels[i] == labels[j]:
            within[labels[i]] = within.get(labels[i], 0.0) + kd(points[i], points[j])
            pairs[labels[i]] = pairs.get(labels[i], 0) + 1
        else:
            between += kd(points[i], points[j])
    return sum(within[c] / pairs[c] for c in within) / between


def brute_ari(a, b):
    """Pair-counting adjusted Rand index."""
    m = len(a)
    both = same_a = same_b = 0
    for i, j in combinations(range(m), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        both += sa and sb
        same_a += sa
        same_b += sb
    total = m * (m - 1) / 2
    expected = same_a * same_b / total
    mx = (same_a + same_b) / 2
    return 1.0 if mx == expected else (both - expected) / (mx - expected)


def test_hand_criterion():
    lab = [0, 0, 1, 1]
    c = criterion_c(Partition(np.array(lab), 2), HAND)
    ref = scalar_criterion(HAND.tolist(), lab)
    assert c.value == pytest.approx(ref, rel=1e-12)
    assert c.value == pytest.approx(0.047581, abs=1e-3)
    np.testing.assert_allclose(c.d_w, 2 * (1 - math.exp(-0.1)), rtol=1e-12)
    assert c.n_p.tolist() == [1, 1]


def test_coincident_clusters_score_zero():
    x = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    assert criterion_c(Partition(np.array([0, 0, 1, 1]), 2), x).value == 0.0


def test_far_singleton_decreases_criterion():
    x = np.vstack([HAND, [[50.0, 50.0]]])
    before = criterion_c(Partition(np.array([0, 0, 1, 1]), 2), HAND)
    after = criterion_c(Partition(np.array([0, 0, 1, 1, 2]), 3), x)
    np.testing.assert_allclose(after.d_w[:2], before.d_w)
    assert after.d_w[2] == 0 and after.n_p[2] == 0
    assert after.d_b > before.d_b and after.value < before.value
    assert after.value == pytest.approx(scalar_criterion(x.tolist(), [0, 0, 1, 1, 2]), rel=1e-12)


def test_zero_between_distance_is_worst():
    x = np.zeros((3, 2))
    c = criterion_c(Partition(np.array([0, 0, 1]), 2), x)
    assert c.value == math.inf


def test_criterion_needs_two_clusters():
    with pytest.raises(ValueError):
        criterion_c(Partition(np.zeros(3, dtype=int), 1), np.zeros((3, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_criterion_invariances(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(4, 12))
    x = rng.standard_normal((m, 2)) * 3
    lab = rng.integers(0, 3, m)
    lab[:3] = [0, 1, 2]
    p = Partition(lab, 3)
    v = criterion_c(p, x).value
    assert v == pytest.approx(scalar_criterion(x.tolist(), lab.tolist()), rel=1e-10)
    relabel = np.array([2, 0, 1])[lab]
    assert criterion_c(Partition(relabel, 3), x).value == pytest.approx(v, rel=1e-12)
    perm = rng.permutation(m)
    assert criterion_c(Partition(lab[perm], 3), x[perm]).value == pytest.approx(v, rel=1e-12)


def test_moving_point_leaves_other_clusters():
    x = np.array([[0.0, 0.0], [0.2, 0.0], [4.0, 0.0], [4.1, 0.0], [9.0, 0.0], [0.1, 0.1]])
    a = criterion_c(Partition(np.array([0, 0, 1, 1, 2, 2]), 3), x)
    # the last point moves next to its kernel-nearest neighbours in cluster 0
    b = criterion_c(Partition(np.array([0, 0, 1, 1, 2, 0]), 3), x)
    assert b.d_w[1] == a.d_w[1]
    assert b.d_w[2] <= a.d_w[2]


def test_ari_examples():
    a = [0, 0, 0, 1, 1, 1]
    assert adjusted_rand_index(a, a) == 1.0
    assert adjusted_rand_index([0] * 6, list(range(6))) == 0.0
    assert adjusted_rand_index(a, [0, 0, 1, 1, 1, 1]) == pytest.approx(1.2 / 3.7, abs=1e-12)
    assert 1.2 / 3.7 == pytest.approx(0.324324, abs=1e-6)
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=8).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))))
def test_ari_properties(pair):
    a, b = pair
    v = adjusted_rand_index(a, b)
    assert v == pytest.approx(brute_ari(a, b), abs=1e-12)
    assert v == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)
    shuffled = [(x + 2) % 4 for x in a]
    assert adjusted_rand_index(shuffled, b) == pytest.approx(v, abs=1e-12)
    assert v <= 1.0 + 1e-12
