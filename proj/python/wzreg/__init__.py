"""Wyner-Ziv coding for polynomial regression: simulation and bounds."""

import json as _json
import os as _os

from ._core import (  # noqa: F401
    Error,
    GaussianCache,
    PolynomialSource,
    RateLossPoint,
    RateSummary,
    Stream,
    TestChannelParams,
    __version__,
    apply_channel,
    density_u,
    density_v,
    dispersion_prob,
    estimate_moments,
    features,
    gen_error_conditional,
    gen_error_upper_bound,
    min_eig_bound_check,
    moment_matrix,
    ols_fit,
    params_from_alpha,
    params_from_distortion,
    params_from_rate,
    raginsky_sqrt_bound,
    rate_loss_bound,
    rates,
    ruhe_check,
    sample_info_loss,
    sample_pairs,
    simulate_gen_error,
)
from . import _core


def _config_text(config):
    if isinstance(config, (str, _os.PathLike)) and _os.path.exists(config):
        with open(config, encoding="utf-8") as handle:
            return handle.read()
    if isinstance(config, dict):
        return _json.dumps(config)
    return str(config)


def load_config(config):
    """Validated canonical config as a dict. Accepts a dict, a path, or a manifest."""
    return _json.loads(_core.canonical_config(_config_text(config)))


def config_hash(config):
    return _core.config_hash(_config_text(config))


def run_experiment(config, out_dir="", threads=1, plot=True):
    """Run an experiment and write its manifest and outputs. Returns a summary dict."""
    return _core.run_experiment(_config_text(config), str(out_dir), threads, plot)
