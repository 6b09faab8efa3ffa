import math

import numpy as np
import pytest

from rocabc.errors import PreconditionError
from rocabc.features import Configuration, Minutia, MinutiaType, rigid_transform, summarize
from rocabc.generative import (
    DEFAULT_PRIORS,
    DistortionParams,
    DistortionPriors,
    Finger,
    Population,
    best_matching_subconfig,
    best_matching_subconfig_scored,
    distort,
    generate_m1,
    generate_m2,
    load_population,
    sample_distortion_params,
    save_population,
    synth_finger,
    synth_population,
)
from rocabc.kernel import DEFAULT_WEIGHTS, delta

from test_features import make_config

IDENTITY_PARAMS = DistortionParams(
    pressure_center=(0.0, 0.0),
    pressure_scale=0.0,
    pressure_dir=0.0,
    anisotropy=0.0,
    jitter_sd=0.0,
    angle_jitter_sd=0.0,
    type_flip_prob=0.0,
)


def triangle():
    return make_config(
        [(100.0, 100.0), (150.0, 120.0), (120.0, 160.0)],
        dirs=[0.4, 1.7, 3.1],
        types=[MinutiaType.RIDGE_ENDING, MinutiaType.BIFURCATION, MinutiaType.UNKNOWN],
    )


class TestSampleDistortionParams:
    def test_deterministic(self):
        cfg = triangle()
        a = sample_distortion_params(np.random.default_rng(42), cfg)
        b = sample_distortion_params(np.random.default_rng(42), cfg)
        assert a == b

    def test_prior_mean_of_scale(self):
        cfg = triangle()
        rng = np.random.default_rng(0)
        draws = np.array(
            [sample_distortion_params(rng, cfg).pressure_scale for _ in range(10_000)]
        )
        lo, hi = DEFAULT_PRIORS.scale_range
        se = (hi - lo) / math.sqrt(12.0) / math.sqrt(draws.size)
        assert abs(draws.mean() - (lo + hi) / 2.0) < 3 * se

    def test_invariants_and_center_support(self):
        cfg = triangle()
        rng = np.random.default_rng(1)
        xs = [m.x for m in cfg.minutiae]
        ys = [m.y for m in cfg.minutiae]
        pad_x = (max(xs) - min(xs)) * 0.1
        pad_y = (max(ys) - min(ys)) * 0.1
        for _ in range(500):
            p = sample_distortion_params(rng, cfg)
            assert p.jitter_sd >= 0 and p.angle_jitter_sd >= 0
            assert 0 <= p.type_flip_prob <= 1
            assert min(xs) - pad_x <= p.pressure_center[0] <= max(xs) + pad_x
            assert min(ys) - pad_y <= p.pressure_center[1] <= max(ys) + pad_y


class TestDistort:
    def test_identity_params(self):
        cfg = triangle()
        out = distort(cfg, IDENTITY_PARAMS, np.random.default_rng(0))
        assert out == cfg

    def test_length_and_pairing_preserved(self):
        cfg = triangle()
        rng = np.random.default_rng(2)
        for _ in range(20):
            out = distort(cfg, sample_distortion_params(rng, cfg), rng)
            assert out.k == cfg.k
            # small distortions: index i stays the nearest to its source
            for a, b in zip(cfg.minutiae, out.minutiae):
                assert math.hypot(a.x - b.x, a.y - b.y) < 60.0

    def test_jitter_moments(self):
        # pure jitter with sd=2: per-axis |dx| is half-normal with mean
        # sd*sqrt(2/pi); the radial displacement is Rayleigh, mean sd*sqrt(pi/2)
        sd = 2.0
        params = DistortionParams(
            pressure_center=(0.0, 0.0), pressure_scale=0.0, pressure_dir=0.0,
            anisotropy=0.0, jitter_sd=sd, angle_jitter_sd=0.0, type_flip_prob=0.0,
        )
        cfg = triangle()
        rng = np.random.default_rng(3)
        dx, radial = [], []
        for _ in range(10_000 // cfg.k):
            out = distort(cfg, params, rng)
            for a, b in zip(cfg.minutiae, out.minutiae):
                dx.append(abs(b.x - a.x))
                radial.append(math.hypot(b.x - a.x, b.y - a.y))
        dx = np.asarray(dx)
        radial = np.asarray(radial)
        half_mean = sd * math.sqrt(2 / math.pi)
        half_sd = sd * math.sqrt(1 - 2 / math.pi)
        assert abs(dx.mean() - half_mean) < 3 * half_sd / math.sqrt(dx.size)
        ray_mean = sd * math.sqrt(math.pi / 2)
        ray_sd = sd * math.sqrt(2 - math.pi / 2)
        assert abs(radial.mean() - ray_mean) < 3 * ray_sd / math.sqrt(radial.size)

    def test_unknown_type_never_flips(self):
        cfg = triangle()
        params = DistortionParams(
            pressure_center=(0.0, 0.0), pressure_scale=0.0, pressure_dir=0.0,
            anisotropy=0.0, jitter_sd=0.0, angle_jitter_sd=0.0, type_flip_prob=1.0,
        )
        rng = np.random.default_rng(4)
        out = distort(cfg, params, rng)
        assert out.minutiae[2].type is MinutiaType.UNKNOWN
        assert out.minutiae[0].type is MinutiaType.BIFURCATION  # flipped
        assert out.minutiae[1].type is MinutiaType.RIDGE_ENDING  # flipped

    def test_flip_rate(self):
        cfg = make_config([(0, 0), (50, 0), (0, 50)], types=[MinutiaType.RIDGE_ENDING] * 3)
        params = DistortionParams(
            pressure_center=(0.0, 0.0), pressure_scale=0.0, pressure_dir=0.0,
            anisotropy=0.0, jitter_sd=0.0, angle_jitter_sd=0.0, type_flip_prob=0.1,
        )
        rng = np.random.default_rng(5)
        n_flip = n_tot = 0
        for _ in range(3000):
            out = distort(cfg, params, rng)
            n_flip += sum(o.type != c.type for o, c in zip(cfg.minutiae, out.minutiae))
            n_tot += cfg.k
        rate = n_flip / n_tot
        assert abs(rate - 0.1) < 4 * math.sqrt(0.1 * 0.9 / n_tot)


class TestSynthFinger:
    def test_separation_invariant(self):
        f = synth_finger(np.random.default_rng(0), 20, area=(500.0, 500.0), d_min=8.0)
        locs = np.array([(m.x, m.y) for m in f.minutiae])
        d = np.linalg.norm(locs[:, None] - locs[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 8.0

    def test_deterministic(self):
        a = synth_finger(np.random.default_rng(9), 12)
        b = synth_finger(np.random.default_rng(9), 12)
        assert a == b

    def test_minimal_n(self):
        assert synth_finger(np.random.default_rng(1), 3).n == 3

    def test_area_too_small(self):
        with pytest.raises(PreconditionError):
            synth_finger(np.random.default_rng(2), 50, area=(20.0, 20.0), d_min=8.0)


class TestSynthPopulation:
    def test_sizes_and_ids(self):
        pop = synth_population(7, 12, minutiae_range=(10, 15))
        assert len(pop.fingers) == 12
        assert pop.seed == 7
        assert len({f.id for f in pop.fingers}) == 12
        assert all(10 <= f.n <= 15 for f in pop.fingers)

    def test_deterministic(self):
        assert synth_population(3, 5) == synth_population(3, 5)

    def test_jsonl_round_trip(self, tmp_path):
        pop = synth_population(11, 4, minutiae_range=(5, 9))
        path = tmp_path / "pop.jsonl"
        save_population(pop, path)
        back = load_population(path)
        assert back == pop


class TestBestMatchingSubconfig:
    def test_exact_rigid_copy_found(self):
        trace = make_config(
            [(100, 100), (160, 110), (130, 170), (90, 150)],
            dirs=[0.3, 1.2, 2.8, 5.0],
            types=[MinutiaType.RIDGE_ENDING] * 4,
        )
        hidden = rigid_transform(trace, 0.9, (55.0, -30.0), about=(120.0, 120.0))
        decoys = tuple(
            Minutia(300.0 + 11 * i, 320.0 + 7 * (i % 3), 0.5 * i) for i in range(6)
        )
        finger = Finger("f", hidden.minutiae + decoys)
        sub, score = best_matching_subconfig_scored(finger, trace)
        assert score == pytest.approx(0.0, abs=1e-6)
        assert sub.minutiae == hidden.minutiae

    def test_n_equals_k_optimal_order(self):
        trace = make_config(
            [(0, 0), (80, 10), (30, 90)], dirs=[0.1, 1.0, 2.0],
        )
        shuffled = Finger(
            "g", (trace.minutiae[2], trace.minutiae[0], trace.minutiae[1])
        )
        sub, score = best_matching_subconfig_scored(shuffled, trace)
        assert sub.minutiae == trace.minutiae
        assert score == pytest.approx(0.0, abs=1e-9)

    def test_beats_random_subsets(self):
        rng = np.random.default_rng(13)
        wins = 0
        trials = 20
        for t in range(trials):
            finger = synth_finger(np.random.default_rng(100 + t), 10)
            trace_src = synth_finger(np.random.default_rng(200 + t), 5)
            trace = Configuration(trace_src.minutiae[:5])
            _, score = best_matching_subconfig_scored(finger, trace)
            su = summarize(trace)
            random_better = False
            for _ in range(200):
                pick = rng.choice(finger.n, size=5, replace=False)
                cand = Configuration(tuple(finger.minutiae[i] for i in pick))
                if delta(su, summarize(cand), DEFAULT_WEIGHTS) < score - 1e-9:
                    random_better = True
                    break
            if not random_better:
                wins += 1
        assert wins >= 0.95 * trials

    def test_too_few_minutiae_rejected(self):
        finger = synth_finger(np.random.default_rng(3), 4)
        trace = Configuration(synth_finger(np.random.default_rng(4), 6).minutiae)
        with pytest.raises(PreconditionError):
            best_matching_subconfig(finger, trace)


class TestGenerators:
    def test_generate_m1_shape(self):
        control = triangle()
        out = generate_m1(control, np.random.default_rng(0))
        assert out.k == control.k

    def test_generate_m2_single_finger(self):
        finger = synth_finger(np.random.default_rng(5), 6)
        pop = Population((finger,))
        trace = Configuration(synth_finger(np.random.default_rng(6), 4).minutiae[:4])
        out = generate_m2(pop, trace, DEFAULT_WEIGHTS, np.random.default_rng(7))
        assert out.k == 4

    def test_generate_m2_uniform_selection(self):
        # fingers occupy disjoint x-bands so the donor is identifiable
        fingers = []
        for i in range(10):
            base = 1000.0 * i
            mins = tuple(
                Minutia(base + 10.0 * j, (23.0 * j * j + 7 * i) % 90, 0.7 * j)
                for j in range(1, 5)
            )
            fingers.append(Finger(f"f{i}", mins))
        pop = Population(tuple(fingers))
        trace = Configuration(fingers[0].minutiae[:3])
        rng = np.random.default_rng(8)
        counts = np.zeros(10, dtype=int)
        n = 2000
        for _ in range(n):
            out = generate_m2(pop, trace, DEFAULT_WEIGHTS, rng)
            counts[int(out.minutiae[0].x // 1000)] += 1
        se = math.sqrt(n * 0.1 * 0.9)
        assert np.all(np.abs(counts - n / 10) <= 4 * se)

    def test_generate_m2_requires_large_enough_finger(self):
        pop = Population((synth_finger(np.random.default_rng(1), 3),))
        trace = Configuration(synth_finger(np.random.default_rng(2), 5).minutiae)
        with pytest.raises(PreconditionError):
            generate_m2(pop, trace, DEFAULT_WEIGHTS, np.random.default_rng(3))


class TestFingerValidation:
    def test_coincident_minutiae_rejected(self):
        with pytest.raises(PreconditionError):
            Finger("bad", (Minutia(0, 0, 0), Minutia(0, 0, 1), Minutia(5, 5, 2)))

    def test_needs_three(self):
        with pytest.raises(PreconditionError):
            Finger("tiny", (Minutia(0, 0, 0), Minutia(5, 5, 1)))

    def test_empty_population_rejected(self):
        with pytest.raises(PreconditionError):
            Population(())
