"""Central table of statistical pass thresholds.

Every experiment reads its tolerances from here so that one place
controls them; a [thresholds] config section overrides per run.
"""

DEFAULTS = {
    # standard-error multiplier for Monte Carlo comparisons
    "sigma_factor": 3.0,
    # Kolmogorov-Smirnov statistic ceiling for sampling-law checks
    "ks_limit": 0.01,
    # relative drift allowed under one grid refinement
    "refinement_limit": 0.2,
    # chi-square goodness-of-fit p-value floor
    "chi2_p_min": 0.01,
    # spread factor allowed for fitted constants across blocks j
    "stability_factor": 3.0,
    # drift smallness threshold for the critical-regime estimates
    "smallness_threshold": 0.1,
    # reconstruction / identity tolerances
    "reconstruction_tol": 1e-10,
    "bony_tol": 1e-8,
    # dt-halving window for order-one convergence (ratio of errors)
    "halving_low": 0.35,
    "halving_high": 0.65,
}


def thresholds_from(config):
    out = dict(DEFAULTS)
    out.update(config.get("thresholds", {}))
    return out
