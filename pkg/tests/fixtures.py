"""Small file builders shared by the CLI and acceptance suites."""
import numpy as np

from dcekit.core import AttitudeDataset, default_attributes, write_attitude_csv, write_choice_csv
from dcekit.design import full_factorial, optimize_design
from dcekit.synth import simulate_choices

SPEC_TEXT = "random = heritage\nfixed = price,origin,certification\n"


def attitude_blobs(path, n_each=40, seed=0):
    """Two respondent types: low scores on every item vs. high scores."""
    rng = np.random.default_rng(seed)
    lo = np.clip(np.rint(rng.normal(1.6, 0.5, (n_each, 16))), 1, 5)
    hi = np.clip(np.rint(rng.normal(4.4, 0.5, (n_each, 16))), 1, 5)
    n = 2 * n_each
    covs = {"age": rng.integers(18, 80, n).astype(float),
            "female": rng.integers(0, 2, n).astype(float),
            "tourist": rng.integers(0, 2, n).astype(float),
            "education": rng.integers(1, 5, n).astype(float),
            "income": rng.integers(1, 6, n).astype(float),
            "fix_income": rng.integers(0, 2, n).astype(float),
            "campaign": rng.integers(0, 2, n).astype(float)}
    covs["income"][3] = np.nan
    towns = [f"Town{i % 4 + 1}" for i in range(n)]
    write_attitude_csv(AttitudeDataset(np.arange(1, n + 1), np.vstack([lo, hi]), covs, towns),
                       path)


def choice_panel(path, n=150, seed=3, campaign_shift=0.0, covariate_generator=None):
    attrs = default_attributes()
    plan = optimize_design(full_factorial(attrs), attrs, seed=1)
    truth = dict(fixed={"asc_A": 0.5, "asc_B": 0.6, "price": -0.09, "origin": 0.9,
                        "certification": 1.2},
                 means={"heritage": 0.3}, spreads={"heritage": 0.7},
                 interactions={"heritage*campaign": campaign_shift})
    kw = {} if covariate_generator is None else {"covariate_generator": covariate_generator}
    d = simulate_choices(plan, truth, n, seed=seed, **kw)
    write_choice_csv(d, path)
    return d
