import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import UNIT, linear_trajectory, make_node, nodes, random_nodes
from sgvad.distances import (SIGMA_FLOOR, NodeFeatures, NormalizationConstants, attribute_distances,
                             class_distance, constants_from_samples, estimate_normalization,
                             location_distance, node_distance, node_distances, pair_distance,
                             pair_distances, paired_attribute_distances, pose_distance,
                             sample_cooccurring_pairs, size_distance, trajectory_distance)
from sgvad.scenegraph import build_graph


def ring_pose(radius, center=(0.0, 0.0)):
    angles = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    ring = np.c_[np.cos(angles), np.sin(angles)] * radius
    return np.vstack([[0.0, 0.0], ring]) + center


def test_location_examples():
    assert location_distance(make_node(location=(2, 2)), make_node(location=(2, 2))) == 0
    assert location_distance(make_node(location=(0, 0)), make_node(location=(3, 4))) == 5
    assert location_distance(make_node(location=(1, 1)), make_node(location=(4, 5))) == 5


def test_size_examples():
    assert size_distance(make_node(size=(3, 4)), make_node(size=(3, 4))) == 0
    assert size_distance(make_node(size=(1, 1)), make_node(size=(2, 2))) == pytest.approx(math.sqrt(2), rel=1e-9)
    assert size_distance(make_node(size=(2, 2)), make_node(size=(4, 2))) == pytest.approx(math.sqrt(2), rel=1e-9)


def test_class_examples():
    assert class_distance(make_node(class_id=7), make_node(class_id=7)) == 0
    assert class_distance(make_node(class_id=0), make_node(class_id=1)) == 1
    assert class_distance(make_node(class_id=1), make_node(class_id=0)) == 1


def test_pose_examples():
    a = make_node(pose=ring_pose(10))
    assert pose_distance(a, make_node(pose=ring_pose(10))) == 0
    # each of the 16 terms is |10 - 20| / 10
    assert pose_distance(a, make_node(pose=ring_pose(20))) == pytest.approx(16, rel=1e-9)
    # coincident keypoints: each term |0 - 5| / max(0, 1)
    degenerate = make_node(pose=np.zeros((17, 2)))
    assert pose_distance(degenerate, make_node(pose=ring_pose(5))) == pytest.approx(80, rel=1e-9)


def test_pose_missing_is_zero():
    assert pose_distance(make_node(pose=ring_pose(3)), make_node(pose=None)) == 0


def test_trajectory_examples():
    t1 = linear_trajectory((100, 0), (-1, 0))
    t2 = linear_trajectory((100, 0), (-2, 0))
    assert trajectory_distance(t1, t1) == 0
    assert trajectory_distance(t1, t2) == pytest.approx(29, rel=1e-9)
    still = linear_trajectory((0, 0), (0, 0))
    assert trajectory_distance(still, linear_trajectory((0, 0), (-3, 0))) == pytest.approx(87, rel=1e-9)


def test_trajectory_signed_displacements():
    # x_t - x_{t+1} = -3 for rightward motion; min(0, -3) is floored to 1
    still = linear_trajectory((0, 0), (0, 0))
    assert trajectory_distance(still, linear_trajectory((0, 0), (3, 0))) == pytest.approx(87, rel=1e-9)
    # opposite directions: |2 - (-2)| / max(-2, 1) = 4 per step
    left = linear_trajectory((0, 0), (-2, 0))
    right = linear_trajectory((0, 0), (2, 0))
    assert trajectory_distance(left, right) == pytest.approx(4 * 29, rel=1e-9)


def test_trajectory_length_mismatch():
    with pytest.raises(ValueError):
        trajectory_distance(np.zeros((30, 2)), np.zeros((29, 2)))


def test_normalization_from_hand_sample():
    raw = np.array([[1, 1, 1, 1, 1], [2, 2, 2, 2, 2], [3, 3, 3, 3, 3]], dtype=float)
    k = constants_from_samples(raw)
    np.testing.assert_allclose(k.mean, 2.0, rtol=1e-12)
    np.testing.assert_allclose(k.std, math.sqrt(2 / 3), rtol=1e-12)
    assert math.sqrt(2 / 3) == pytest.approx(0.8165, abs=1e-4)


def test_normalization_degenerate_samples():
    n = make_node(pose=ring_pose(4))
    k = estimate_normalization([(n, n)] * 5)
    assert k.mean == (0.0,) * 5 and k.std == (SIGMA_FLOOR,) * 5
    a, b = make_node(location=(0, 0)), make_node(location=(3, 4), class_id=2)
    k = estimate_normalization([(a, b)])
    assert k.mean == attribute_distances(a, b)
    assert k.std == (SIGMA_FLOOR,) * 5
    with pytest.raises(ValueError):
        estimate_normalization([])


def test_constants_validate():
    with pytest.raises(ValueError):
        NormalizationConstants((0,) * 5, (1, 1, 0, 1, 1))
    with pytest.raises(ValueError):
        NormalizationConstants((0,) * 4, (1,) * 4)


def test_node_distance_examples():
    n = make_node()
    assert node_distance(n, n, UNIT) == 0
    k = NormalizationConstants((1, 1, 0.5, 2, 3), (1,) * 5)
    assert node_distance(n, n, k) == pytest.approx(-0.5, rel=1e-12)
    assert node_distance(make_node(class_id=0), make_node(class_id=5), UNIT) == 1


def test_pair_distance_examples():
    a = make_node(location=(0, 0), class_id=0)
    b = make_node(location=(30, 40), class_id=1)
    k = NormalizationConstants((1, 1, 0.5, 2, 3), (1, 2, 1, 1, 1))
    assert pair_distance((a, b), (a, b), k) <= 0
    # by hand: straight = max(D(a,b), D(b,a)) = max(50-1, ...) = 49;
    # crossed = max(D(a,a), D(b,b)) = -0.5, so the minimum is the crossed pairing
    assert node_distance(a, b, k) == pytest.approx(49, rel=1e-12)
    assert pair_distance((a, b), (b, a), k) == pytest.approx(-0.5, rel=1e-12)
    assert pair_distance((a, b), (b, a), k) == max(node_distance(a, a, k), node_distance(b, b, k))


# -------------------------------------------------------------- properties

consts = st.tuples(st.lists(st.floats(0, 50), min_size=5, max_size=5),
                   st.lists(st.floats(0.01, 50), min_size=5, max_size=5)).map(
    lambda t: NormalizationConstants(tuple(t[0]), tuple(t[1])))


@given(nodes(), nodes())
def test_attribute_distances_symmetric_nonnegative(a, b):
    ab, ba = attribute_distances(a, b), attribute_distances(b, a)
    np.testing.assert_allclose(ab, ba, rtol=1e-12, atol=1e-12)
    assert min(ab) >= 0
    assert attribute_distances(a, a) == (0.0,) * 5


@given(nodes(), consts)
def test_node_self_distance(n, k):
    expected = max(-m / s for m, s in zip(k.mean, k.std))
    assert node_distance(n, n, k) == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert node_distance(n, n, k) <= 0


@given(nodes(), nodes(), nodes(), nodes(), consts)
def test_pair_distance_symmetries(a, b, c, d, k):
    base = pair_distance((a, b), (c, d), k)
    assert pair_distance((c, d), (a, b), k) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert pair_distance((b, a), (c, d), k) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert pair_distance((a, b), (d, c), k) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert pair_distance((a, b), (a, b), k) <= 0


@given(nodes(), nodes(), st.tuples(st.floats(-500, 500), st.floats(-500, 500)))
def test_translation_invariance(a, b, shift):
    shift = np.asarray(shift)
    moved_a = make_node(location=a.location + shift, trajectory=a.trajectory + shift)
    moved_b = make_node(location=b.location + shift, trajectory=b.trajectory + shift)
    assert location_distance(moved_a, moved_b) == pytest.approx(location_distance(a, b), rel=1e-9, abs=1e-6)
    assert trajectory_distance(a.trajectory + shift, b.trajectory) == pytest.approx(
        trajectory_distance(a.trajectory, b.trajectory), rel=1e-9, abs=1e-9)


@given(st.lists(st.tuples(st.integers(-9, 9), st.integers(-9, 9)), min_size=29, max_size=29),
       st.lists(st.tuples(st.integers(-9, 9), st.integers(-9, 9)), min_size=29, max_size=29))
def test_trajectory_terms_bounded(s1, s2):
    # every denominator is at least 1, so the sum never exceeds the raw L1 gap
    t1 = np.vstack([[0, 0], np.cumsum(s1, axis=0)])
    t2 = np.vstack([[0, 0], np.cumsum(s2, axis=0)])
    raw = np.abs(np.diff(t1, axis=0) - np.diff(t2, axis=0)).sum()
    assert 0 <= trajectory_distance(t1, t2) <= raw + 1e-9


def test_batched_matches_scalar():
    rng = np.random.default_rng(1)
    a, b = random_nodes(rng, 300), random_nodes(rng, 300)
    batched = paired_attribute_distances(NodeFeatures.from_nodes(a), NodeFeatures.from_nodes(b))
    scalar = np.array([attribute_distances(x, y) for x, y in zip(a, b)])
    np.testing.assert_allclose(batched, scalar, rtol=1e-9, atol=1e-12)
    k = NormalizationConstants(tuple(scalar.mean(0)), tuple(scalar.std(0)))
    fa, fb = NodeFeatures.from_nodes(a), NodeFeatures.from_nodes(b)
    np.testing.assert_allclose(node_distances(fa, fb, k), [node_distance(x, y, k) for x, y in zip(a, b)],
                               rtol=1e-9, atol=1e-12)
    c, d = random_nodes(rng, 300), random_nodes(rng, 300)
    fc, fd = NodeFeatures.from_nodes(c), NodeFeatures.from_nodes(d)
    expected = [pair_distance((w, x), (y, z), k) for w, x, y, z in zip(a, b, c, d)]
    np.testing.assert_allclose(pair_distances(fa, fb, fc, fd, k), expected, rtol=1e-9, atol=1e-12)


def test_features_reject_mixed_lengths():
    with pytest.raises(ValueError):
        NodeFeatures.from_nodes([make_node(T=30), make_node(T=20)])


def test_cooccurring_sample():
    frames = [build_graph([make_node(location=(x, 0)) for x in range(n)], 250, frame_id=f)
              for f, n in enumerate([1, 3, 4])]
    everything = sample_cooccurring_pairs(frames, max_pairs=100)
    assert len(everything) == 3 + 6
    sub = sample_cooccurring_pairs(frames, max_pairs=5, seed=3)
    assert len(sub) == 5
    assert sub == sample_cooccurring_pairs(frames, max_pairs=5, seed=3)
    # pairs never mix frames
    for p, q in sub:
        assert any(p is n for g in frames for n in g.nodes if any(q is m for m in g.nodes))
    assert sample_cooccurring_pairs(frames[:1]) == []
