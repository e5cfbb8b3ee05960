import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from socialtrend import checks
from socialtrend.config import bundled_config_path, parse_config
from socialtrend.core import FixedPartial, FullSharing, TrendingBootstrap
from socialtrend.engine import ExperimentConfig
from socialtrend.models import LikelihoodModel, TrendDistribution
from socialtrend.network import Topology, build_metropolis


def small_config(means, protocol, truth=0, horizon=50, seed=0):
    model = LikelihoodModel.gaussian(means)
    topo = Topology.complete(len(means)) if len(means) > 1 else Topology.from_adjacency([[]])
    return ExperimentConfig(topo, build_metropolis(topo), protocol, model, truth, horizon, seed)


def test_report_line_and_dict():
    rep = checks.CheckReport("demo", True, np.float64(0.5), 1.0, {"n": 3}, 7, {"x": np.arange(2)})
    assert rep.line().startswith("[PASS] demo")
    assert rep.to_dict()["details"]["x"] == [0, 1]


def test_rate_check_skips_truth(fig3):
    rep = checks.check_rate_convergence(fig3, theta=0)
    assert rep.passed and "skipped" in rep.note


def test_rate_check_needs_shared_hypothesis(fig3):
    cfg = fig3.replace(protocol=TrendingBootstrap(TrendDistribution([0.5, 0.5, 0, 0, 0])))
    with pytest.raises(ValueError, match="never shared"):
        checks.check_rate_convergence(cfg, theta=3)


def test_rate_check_rejects_unidentifiable():
    cfg = small_config([[0.0, 0.0, 1.0]] * 2, TrendingBootstrap(TrendDistribution.uniform(3)))
    with pytest.raises(ValueError, match="not identifiable"):
        checks.check_rate_convergence(cfg, theta=1)


def test_supermartingale_equality_case():
    # uninformative data and a single-atom trend: the loss never moves
    pi = TrendDistribution.delta(3, 1)
    cfg = small_config([[0.0, 0.0, 0.0]] * 3, TrendingBootstrap(pi), horizon=30)
    for flipped in (False, True):
        rep = checks.check_supermartingale(cfg, num_branches=50, num_states=5, flipped=flipped)
        assert rep.passed
        for row in rep.details["states"]:
            assert row["mean"] == pytest.approx(row["Q_prev"], abs=1e-12)


def test_supermartingale_flipped_control_fails(fig3):
    cfg = fig3.replace(horizon=200)
    assert checks.check_supermartingale(cfg, 1000, 20).passed
    assert not checks.check_supermartingale(cfg, 1000, 20, flipped=True).passed


def test_counterexample_state_layout():
    s = checks.counterexample_state(0.3)
    p = np.exp(s.beliefs)
    assert_allclose(p, [[0.7, 0, 0, 0.3], [0, 0.7, 0, 0.3], [0, 0, 0.7, 0.3]])
    with pytest.raises(ValueError):
        checks.counterexample_state(1.0)


def test_fixed_point_breaks_when_wrong_hypotheses_trend():
    pi = TrendDistribution([1 / 3, 1 / 3, 1 / 3, 0.0])
    rep = checks.check_fixed_point(0.3, seed=0, pi=pi)
    assert not rep.passed
    assert_allclose(np.array(rep.details["final"])[:, 3], 1.0, atol=1e-6)


def test_no_mislearning_excludes_uniform_fill_on_wrong_hypothesis():
    cfg = parse_config(bundled_config_path("wrong_fill"))
    with pytest.raises(ValueError, match="uniform fill"):
        checks.check_no_mislearning([cfg])


def test_no_mislearning_single_agent():
    cfg = small_config([[0.0, 1.0, 2.0]], TrendingBootstrap(TrendDistribution.uniform(3)), horizon=200)
    rep = checks.check_no_mislearning([cfg])
    assert rep.passed and rep.statistic > 0


def test_matrix_products_deterministic_factors(fig3):
    A = fig3.matrix
    a, b, c = checks.check_matrix_product_lemmas(A, 1.0, samples=200)
    assert a.passed and c.passed
    assert b.statistic == pytest.approx(math.log(A.mixing_lambda), abs=0.02)


def test_matrix_products_without_factors(fig3):
    a, b, c = checks.check_matrix_product_lemmas(fig3.matrix, 0.0, samples=200)
    # identity products: norm flat and no convergence to the Perron outer product
    assert b.statistic == pytest.approx(0.0, abs=1e-12)
    assert not c.passed and c.statistic == pytest.approx(0.9)


def test_pool_bins_keeps_totals():
    obs, exp = checks._pool_bins(np.array([1, 2, 30, 40, 3]), np.array([0.5, 2.0, 33, 38, 2.5]))
    assert obs.sum() == 76 and exp.sum() == pytest.approx(76)
    assert np.all(exp >= 4.9)


def test_mislearning_condition_identical_rows():
    model = LikelihoodModel.gaussian([[0.4, 0.4, 0.4]] * 2)
    cond = checks.check_mislearning_condition(model, [0.5, 0.5], tau=1, truth=0)
    assert cond.lhs == 0 and cond.rhs == pytest.approx(0, abs=1e-10) and not cond.holds


def test_mislearning_condition_two_hypotheses():
    # the complement of tau is the truth itself, so the right side vanishes
    model = LikelihoodModel.gaussian([[0.0, 1.0], [0.0, 2.0]])
    cond = checks.check_mislearning_condition(model, [0.5, 0.5], tau=1, truth=0)
    assert cond.lhs == pytest.approx(0.5 * 0.5 + 0.5 * 2.0)
    assert cond.rhs == pytest.approx(0.0, abs=1e-9) and not cond.holds


def test_mislearning_condition_wrong_fill_instance():
    cfg = parse_config(bundled_config_path("wrong_fill"))
    cond = checks.check_mislearning_condition(cfg.model, cfg.matrix.perron, 1, 0)
    assert cond.lhs == pytest.approx(0.045)
    # KL(p || (p + q) / 2) = log 2 - E_p log(1 + q / p), with q / p = exp(5x - 12.5) here;
    # the expectation by Gauss-Hermite nodes as an independent rule
    x, w = np.polynomial.hermite_e.hermegauss(200)
    expected = math.log(2) - np.sum(w * np.logaddexp(0.0, 5 * x - 12.5)) / math.sqrt(2 * math.pi)
    assert cond.rhs == pytest.approx(expected, abs=1e-8)
    assert cond.holds and cond.max_abserr < 1e-6


def test_mislearning_condition_needs_wrong_tau():
    with pytest.raises(ValueError):
        checks.check_mislearning_condition(LikelihoodModel.gaussian([[0, 1]]), [1.0], 0, 0)


def test_truth_sharing_contrast(fig3):
    uniform = checks.check_truth_sharing_sufficiency_uniform_fill(fig3, fill="uniform")
    bootstrap = checks.check_truth_sharing_sufficiency_uniform_fill(fig3, fill="bootstrap")
    assert uniform.passed
    assert not bootstrap.passed and bootstrap.details["non_convergent"]


def test_truth_sharing_single_agent():
    cfg = small_config([[0.0, 1.0, 2.0]], FixedPartial(0), horizon=300)
    assert checks.check_truth_sharing_sufficiency_uniform_fill(cfg).passed


def test_residual_decomposition(fig3):
    rep = checks.check_residual_decomposition(fig3.replace(horizon=1000), 2)
    assert rep.passed
    assert rep.details["identity_error"] < 1e-10
    assert "surrogate" in rep.note


def test_battery_rejects_unknown_names():
    with pytest.raises(KeyError, match="available"):
        checks.run_battery(["nope"])


def test_battery_reproducible():
    a = [r.to_dict() for r in checks.run_battery(["matrix_products", "recursions"], seed=3)]
    b = [r.to_dict() for r in checks.run_battery(["matrix_products", "recursions"], seed=3)]
    assert a == b
