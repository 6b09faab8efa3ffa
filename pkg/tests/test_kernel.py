import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rocabc.errors import NumericalError, PreconditionError
from rocabc.features import MinutiaType, SummaryVector, summarize, rigid_transform
from rocabc.kernel import (
    DEFAULT_WEIGHTS,
    KernelWeights,
    auc,
    delta,
    delta1,
    delta2,
    delta3,
    delta4,
    delta5,
    delta_batch,
    delta_components_batch,
    mean_auc,
    optimize_weights,
    weights_from_json,
    weights_to_json,
)
from rocabc.features import summarize_batch

from test_features import make_config


def sv(cross=(1.0,), cent=(1.0,), marker=(1.0,), angles=(90.0,), types=(0,)):
    return SummaryVector(
        cross_dists=np.asarray(cross, dtype=float),
        centroid_dists=np.asarray(cent, dtype=float),
        dir_marker_cross_dists=np.asarray(marker, dtype=float),
        centroid_angles=np.asarray(angles, dtype=float),
        types=np.asarray(types, dtype=np.int8),
    )


class TestDelta1:
    def test_identity(self):
        s = sv(cross=(4.0, 2.0))
        assert delta1(s, s) == 0.0

    def test_hand_value(self):
        assert delta1(sv(cross=(4.0,)), sv(cross=(9.0,))) == pytest.approx(2.5)

    def test_asymmetric(self):
        a, b = sv(cross=(4.0,)), sv(cross=(9.0,))
        assert delta1(a, b) != delta1(b, a)

    def test_zero_normalizer_rejected(self):
        with pytest.raises(PreconditionError):
            delta1(sv(cross=(0.0,)), sv(cross=(1.0,)))

    def test_length_mismatch_rejected(self):
        with pytest.raises(PreconditionError):
            delta1(sv(cross=(1.0,)), sv(cross=(1.0, 2.0)))


class TestDelta2:
    def test_identity(self):
        s = sv(cent=(3.0, 5.0))
        assert delta2(s, s) == 0.0

    def test_hand_value(self):
        got = delta2(sv(cent=(1.0, 4.0)), sv(cent=(2.0, 6.0)))
        assert got == pytest.approx(math.sqrt(1 / 1 + 4 / 4))

    def test_length_mismatch(self):
        with pytest.raises(PreconditionError):
            delta2(sv(cent=(1.0,)), sv(cent=(1.0, 1.0)))


class TestDelta3:
    def test_identity(self):
        s = sv(marker=(2.0, 7.0))
        assert delta3(s, s) == 0.0

    def test_equals_delta1_when_directions_equal(self):
        # same directions everywhere: markers are a rigid offset of locations
        a = make_config([(0, 0), (9, 2), (4, 7)], dirs=[0.8, 0.8, 0.8])
        b = make_config([(0, 0), (10, 1), (5, 6)], dirs=[1.9, 1.9, 1.9])
        sa, sb = summarize(a), summarize(b)
        assert delta3(sa, sb) == pytest.approx(delta1(sa, sb), abs=1e-9)

    def test_zero_normalizer(self):
        with pytest.raises(PreconditionError):
            delta3(sv(marker=(0.0,)), sv(marker=(1.0,)))


class TestDelta4:
    def test_identity(self):
        s = sv(angles=(123.0, 11.0))
        assert delta4(s, s) == 0.0

    def test_first_branch(self):
        assert delta4(sv(angles=(90.0,)), sv(angles=(45.0,))) == pytest.approx(0.5)

    def test_second_branch_mod_residue(self):
        # |90 - 300| = 210 > 180 -> ((180 - 210) mod 180) / 90 = 150 / 90
        got = delta4(sv(angles=(90.0,)), sv(angles=(300.0,)))
        assert got == pytest.approx(150.0 / 90.0)

    def test_wrapped_flag_agrees_on_circle(self):
        # for angles in [0, 360) the printed mod-180 branch equals the
        # wrapped circular difference
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 360, size=200)
        b = rng.uniform(0, 360, size=200)
        assert delta4(sv(angles=a), sv(angles=b)) == pytest.approx(
            delta4(sv(angles=a), sv(angles=b), wrapped=True)
        )

    def test_zero_angle_floored_not_rejected(self):
        got = delta4(sv(angles=(0.0,)), sv(angles=(0.5,)))
        assert got == pytest.approx(0.5 / 1.0)  # normalizer floored at 1 degree


class TestDelta5:
    def test_all_match(self):
        s = sv(types=(0, 1, 0, 1, 2, 0, 1))
        assert delta5(s, s) == pytest.approx(math.sqrt(7))

    def test_no_match(self):
        a = sv(types=(0, 0, 0))
        b = sv(types=(1, 1, 1))
        assert delta5(a, b) == 0.0

    def test_partial(self):
        a = sv(types=(0, 1, 0, 1))
        b = sv(types=(0, 1, 1, 0))
        assert delta5(a, b) == pytest.approx(math.sqrt(2))
        assert delta5(a, b, mismatch=True) == pytest.approx(math.sqrt(2))

    def test_mismatch_flag_complements(self):
        a = sv(types=(0, 1, 2, 1))
        b = sv(types=(0, 0, 2, 1))
        assert delta5(a, b) ** 2 + delta5(a, b, mismatch=True) ** 2 == pytest.approx(4)


class TestDelta:
    def test_identity_zero_with_c5_zero(self):
        cfg = make_config([(0, 0), (30, 5), (12, 40)], dirs=[0.2, 2.0, 4.0])
        s = summarize(cfg)
        assert delta(s, s, DEFAULT_WEIGHTS) == 0.0

    def test_default_weights(self):
        w = DEFAULT_WEIGHTS
        assert (w.c1, w.c2, w.c3, w.c4, w.c5) == (1.0, 0.0, 6.5, 0.1, 0.0)

    def test_weights_select_component(self):
        a = sv(cross=(4.0,), angles=(90.0,))
        b = sv(cross=(9.0,), angles=(45.0,))
        w = KernelWeights(1, 0, 0, 0, 0)
        assert delta(a, b, w) == pytest.approx(delta1(a, b))

    def test_rigid_invariance(self):
        cfg = make_config([(5, 5), (100, 20), (30, 90), (70, 70)], dirs=[0.1, 1, 2, 3])
        other = make_config([(6, 5), (99, 25), (33, 88), (74, 66)], dirs=[0.2, 1, 2, 3])
        base = delta(summarize(cfg), summarize(other))
        moved_cfg = rigid_transform(cfg, 0.9, (11, -7), about=(50, 50))
        moved_other = rigid_transform(other, -1.3, (3, 2), about=(0, 0))
        assert delta(summarize(moved_cfg), summarize(other)) == pytest.approx(base, abs=1e-9)
        assert delta(summarize(cfg), summarize(moved_other)) == pytest.approx(base, abs=1e-9)

    def test_batch_matches_scalar(self):
        a = make_config([(5, 5), (100, 20), (30, 90)], dirs=[0.1, 1.0, 2.0])
        b = make_config([(6, 7), (96, 24), (28, 95)], dirs=[0.3, 0.9, 2.2])
        sa, sb = summarize(a), summarize(b)
        batch = summarize_batch(
            b.locations()[None], b.directions()[None], b.type_codes()[None]
        )
        comp = delta_components_batch(sa, batch)[0]
        assert comp[0] == pytest.approx(delta1(sa, sb))
        assert comp[1] == pytest.approx(delta2(sa, sb))
        assert comp[2] == pytest.approx(delta3(sa, sb))
        assert comp[3] == pytest.approx(delta4(sa, sb))
        assert comp[4] == pytest.approx(delta5(sa, sb))
        assert delta_batch(sa, batch)[0] == pytest.approx(delta(sa, sb))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([1, 2, 3], [4, 5, 6]) == 1.0

    def test_identical_distributions(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        assert auc(xs, xs) == 0.5

    def test_hand_value(self):
        assert auc([1, 3], [2, 4]) == 0.75

    def test_empty_rejected(self):
        with pytest.raises(PreconditionError):
            auc([], [1.0])

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.integers(0, 1000), min_size=1, max_size=40),
        st.lists(st.integers(0, 1000), min_size=1, max_size=40),
    )
    def test_complement_without_ties(self, a, b):
        # make tie-free by separating parities
        a = [2 * v for v in set(a)]
        b = [2 * v + 1 for v in set(b)]
        assert auc(a, b) + auc(b, a) == pytest.approx(1.0)


def synthetic_training(seed=0, cases=4, n=300, informative=0):
    """Component sets where only one component separates; the rest are noise."""
    rng = np.random.default_rng(seed)
    training = []
    for _ in range(cases):
        same = rng.normal(5.0, 1.0, size=(n, 5))
        diff = rng.normal(5.0, 1.0, size=(n, 5))
        diff[:, informative] += 4.0
        training.append((same, diff))
    return training


class TestOptimizeWeights:
    def test_informative_component_dominates(self):
        training = synthetic_training(informative=0)
        w = optimize_weights(training, seed=1, n_restarts=4, threads=1)
        arr = np.abs(w.as_array())
        assert arr[0] == max(arr)
        best = mean_auc(training, w.as_array())
        only = mean_auc(training, np.array([1.0, 0, 0, 0, 0]))
        assert best >= only - 0.01

    def test_never_worse_than_default(self):
        training = synthetic_training(informative=2, seed=3)
        w = optimize_weights(training, seed=2, n_restarts=2, threads=1)
        assert mean_auc(training, w.as_array()) >= mean_auc(
            training, DEFAULT_WEIGHTS.as_array()
        )

    def test_scaling_leaves_auc_unchanged(self):
        training = synthetic_training(seed=5)
        w = optimize_weights(training, seed=5, n_restarts=1, threads=1).as_array()
        for comps_same, comps_diff in training:
            assert auc(comps_same @ w, comps_diff @ w) == pytest.approx(
                auc(comps_same @ (2 * w), comps_diff @ (2 * w))
            )

    def test_degenerate_training_rejected(self):
        flat = np.ones((50, 5))
        with pytest.raises(NumericalError):
            optimize_weights([(flat, flat)], threads=1)


class TestWeightsJson:
    def test_round_trip(self):
        w = KernelWeights(1, 0.5, 6.5, 0.1, -0.2)
        assert weights_from_json(weights_to_json(w)) == w

    def test_bad_length(self):
        with pytest.raises(PreconditionError):
            weights_from_json({"c": [1, 2, 3]})
