import math
import statistics

import numpy as np
import pytest

from rocabc.engine import Method, ModelPrior, RunConfig, generic_run
from rocabc.errors import PreconditionError
from rocabc.oracle import (
    CompositeGaussianSetting,
    SimpleGaussianSetting,
    make_setting,
    oracle_run,
    run_oracle,
    true_bf_composite_gaussian,
    true_bf_simple_gaussian,
)

E_HALF = math.exp(0.5)  # truth for the d=0 simple-Gaussian setting


class TestTrueBfSimple:
    def test_midpoint_symmetry(self):
        assert true_bf_simple_gaussian(0.5, 0.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_at_zero(self):
        assert true_bf_simple_gaussian(0.0, 0.0, 1.0, 1.0) == pytest.approx(E_HALF)

    def test_identical_models(self):
        assert true_bf_simple_gaussian(0.3, 0.3, 0.3, 2.7) == pytest.approx(1.0)

    def test_bad_sigma(self):
        with pytest.raises(PreconditionError):
            true_bf_simple_gaussian(0.0, 0.0, 1.0, 0.0)


class TestTrueBfComposite:
    def test_tau_zero_same_mean(self):
        for d in (-2.0, 0.0, 1.5):
            assert true_bf_composite_gaussian(d, 0.0, 0.0, 1.0) == pytest.approx(1.0)

    def test_at_zero_unit_tau(self):
        assert true_bf_composite_gaussian(0.0, 0.0, 1.0, 1.0) == pytest.approx(
            math.sqrt(2.0)
        )

    def test_generic_value_frozen(self):
        # high-precision evaluation of N(1; 0, 1) / N(1; 0, 5)
        assert true_bf_composite_gaussian(1.0, 0.0, 2.0, 1.0) == pytest.approx(
            1.498881189616478, rel=1e-12
        )


class TestSettings:
    def test_make_setting(self):
        assert isinstance(make_setting("simple"), SimpleGaussianSetting)
        assert isinstance(make_setting("composite", tau=3.0), CompositeGaussianSetting)
        with pytest.raises(PreconditionError):
            make_setting("bogus")

    def test_setting_truths(self):
        assert SimpleGaussianSetting().true_bf() == pytest.approx(E_HALF)
        assert CompositeGaussianSetting().true_bf() == pytest.approx(
            1.498881189616478, rel=1e-12
        )


class TestOracleRuns:
    def test_empirical_converges_smallish(self):
        cfg = RunConfig(n_total=50_000, m_denominator=50, master_seed=100)
        errs = []
        for s in range(5):
            res = oracle_run(
                SimpleGaussianSetting(),
                RunConfig(n_total=50_000, m_denominator=50, master_seed=100 + s),
            )
            errs.append(abs(res.bf_log10 - math.log10(E_HALF)))
        assert statistics.median(errs) < 0.15

    def test_indistinguishable_models_all_methods(self):
        setting = SimpleGaussianSetting(mu2=0.0)  # mu1 == mu2
        cfg = RunConfig(n_total=30_000, m_denominator=50, p_floor=1e-2, master_seed=7)
        report = run_oracle(setting, cfg, seeds=3)
        for stats in report["methods"].values():
            for v in stats["bf_log10"]:
                assert abs(v) <= 0.1

    def test_prior_cancellation(self):
        # Eq. 3's prior-odds factor removes the sampling prior from the BF.
        setting = SimpleGaussianSetting()
        truth = math.log10(E_HALF)
        medians = {}
        for pi1 in (0.5, 0.9):
            vals = []
            for s in range(10):
                cfg = RunConfig(n_total=50_000, m_denominator=20, master_seed=500 + s)
                res = oracle_run(setting, cfg, prior=ModelPrior(pi1, 1.0 - pi1))
                vals.append(res.bf_log10)
            medians[pi1] = statistics.median(vals)
        assert abs(medians[0.5] - medians[0.9]) <= 0.1
        for v in medians.values():
            assert abs(v - truth) <= 0.15

    def test_error_shrinks_with_n(self):
        setting = SimpleGaussianSetting()
        truth = math.log10(E_HALF)

        def median_err(n, m, base_seed):
            errs = []
            for s in range(20):
                cfg = RunConfig(n_total=n, m_denominator=m, master_seed=base_seed + s)
                errs.append(abs(oracle_run(setting, cfg).bf_log10 - truth))
            return statistics.median(errs)

        assert median_err(200_000, 100, 900) <= median_err(20_000, 10, 900)

    def test_sign_agreement_when_truth_clear(self):
        # |log10 truth| > 0.5 here: BF(d=2) = exp(-1.5), log10 ~ -0.65
        setting = SimpleGaussianSetting(d=2.0)
        truth_sign = -1.0
        cfg = RunConfig(n_total=30_000, m_denominator=30, p_floor=1e-2, master_seed=0)
        report = run_oracle(setting, cfg, seeds=10)
        for stats in report["methods"].values():
            signs = [math.copysign(1.0, v) for v in stats["bf_log10"]]
            agree = sum(s == truth_sign for s in signs)
            assert agree >= 9

    def test_report_structure(self):
        cfg = RunConfig(n_total=5_000, m_denominator=10, master_seed=1)
        report = run_oracle(
            SimpleGaussianSetting(), cfg, seeds=2, methods=(Method.EMPIRICAL,)
        )
        assert report["setting"] == "simple"
        assert report["seeds"] == 2
        stats = report["methods"]["empirical"]
        assert len(stats["bf_log10"]) == 2
        assert stats["within_0.3"] <= 2
