import json
import math

import numpy as np
import pytest

import wzreg

SMALL_CONFIG = {
    "experiment": "asymptotic-sweep",
    "seed": 5,
    "source": {"k": 3, "beta": [2, 3, 1], "sigma2": 16, "y_dist": {"kind": "uniform", "a": 1}},
    "channel": {"distortion": 8},
    "grids": {"n": [20, 40]},
    "samples": {"replicates": 200},
}


@pytest.fixture
def source():
    return wzreg.PolynomialSource([2.0, 3.0, 1.0], 16.0, uniform_half_width=1.0)


def test_channel_and_rates():
    ch = wzreg.params_from_distortion(16.0, 8.0)
    assert ch.alpha == pytest.approx(0.5)
    assert ch.sigma_phi2 == pytest.approx(16.0)
    r = wzreg.rates(16.0, ch)
    assert r.r_wz == pytest.approx(0.5, abs=1e-12)
    assert abs(r.r_wz - r.r_conditional) < 1e-12
    assert wzreg.raginsky_sqrt_bound(0.5, 16.0) > 4.0


def test_errors_carry_codes():
    with pytest.raises(wzreg.Error) as info:
        wzreg.params_from_distortion(16.0, 20.0)
    assert info.value.code == "infeasible_distortion"
    assert info.value.exit_status == 2


def test_densities_integrate_to_one(source):
    v = np.linspace(0.0, 6.0, 200001)
    assert np.trapezoid(wzreg.density_v(source, v), v) == pytest.approx(1.0, abs=2e-3)
    ch = wzreg.params_from_distortion(16.0, 8.0)
    u = np.linspace(-40.0, 40.0, 4001)
    assert np.trapezoid(wzreg.density_u(source, ch, u), u) == pytest.approx(1.0, abs=1e-6)


def test_training_and_generalization(source):
    ch = wzreg.params_from_distortion(16.0, 8.0)
    rng = wzreg.Stream(11)
    x, y = wzreg.sample_pairs(source, 5000, rng)
    u = wzreg.apply_channel(x, ch, rng)
    beta_hat = wzreg.ols_fit(u, y, ch, 3)
    # Cov(beta_hat | y) = (sigma2 + sigma_phi2) (Y* Y*^T)^-1; the Mahalanobis
    # distance is chi-square with 3 degrees of freedom (21.1 is its 0.9999 quantile).
    design = np.vander(np.asarray(y), 3, increasing=True)
    cov = (16.0 + ch.sigma_phi2) * np.linalg.inv(design.T @ design)
    err = np.asarray(beta_hat) - np.array([2.0, 3.0, 1.0])
    assert err @ np.linalg.solve(cov, err) < 21.1
    g = wzreg.gen_error_conditional(beta_hat, source)
    assert g >= 16.0
    study = wzreg.simulate_gen_error(source, ch, 200, 500, seed=3)
    assert study["mc_estimate"] <= study["upper_bound"]
    assert study["gen_error"].shape == (500,)


def test_info_loss_and_rate_bound(source):
    ch = wzreg.params_from_distortion(16.0, 8.0)
    samples = wzreg.sample_info_loss(source, ch, 30, 4000, seed=2)
    assert samples.shape == (4000, 3)
    moments = wzreg.estimate_moments(samples)
    assert abs(moments["j"][0] + moments["j"][1] - 0.5) < 4 * moments["rate_std_error"]
    cache = wzreg.GaussianCache(moments["v"], 100000, seed=4)
    point = wzreg.rate_loss_bound(moments["j"], moments["v"], 30, 0.1, 40.0, cache, loss_floor=16.0)
    assert point.feasible and math.isfinite(point.rate)
    below = wzreg.rate_loss_bound(moments["j"], moments["v"], 30, 0.1, 15.0, cache, loss_floor=16.0)
    assert not below.feasible and math.isinf(below.rate)


def test_run_experiment_round_trip(tmp_path):
    first = wzreg.run_experiment(SMALL_CONFIG, tmp_path / "a", threads=1)
    manifest = json.loads(open(first["manifest"]).read())
    assert manifest["status"] == "complete"
    assert manifest["config_sha256"] == wzreg.config_hash(SMALL_CONFIG)
    again = wzreg.run_experiment(first["manifest"], tmp_path / "b", threads=4)
    assert open(first["outputs"][0], "rb").read() == open(again["outputs"][0], "rb").read()
    header = open(first["outputs"][0]).readline().strip()
    assert header == ("n,mc_gen_error_mean,mc_gen_error_stderr,closed_form_eq14,"
                      "upper_bound_eq17,raginsky_sqrt_bound_squared,sigma2")


def test_config_validation_lists_paths():
    bad = dict(SMALL_CONFIG, seed=None)
    with pytest.raises(wzreg.Error) as info:
        wzreg.load_config(bad)
    assert info.value.code == "config_error"
    assert "seed" in str(info.value)
