import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcekit.core import ChoiceDataset, EstimationResult, ModelSpec, ValidationError, default_attributes
from dcekit.mixl import make_draws
from dcekit.wtp import (UndefinedRatioError, individual_wtp, kernel_density, positive_share,
                        silverman_bandwidth, wtp_point, wtp_se_delta, wtp_table,
                        write_density_csv, write_wtp_csv)

RANDOM = ("origin", "processing", "harvesting", "certification", "heritage")
COL1_MEAN = dict(origin=0.965, processing=0.624, harvesting=0.938, certification=1.215,
                 heritage=0.454)
COL1_SD = dict(origin=1.028, processing=0.767, harvesting=1.069, certification=1.150,
               heritage=0.829)
SPEC = ModelSpec(random=RANDOM, fixed=("price",))


def col1_result(cov=None):
    theta = SPEC.pack({"asc_A": 1.361, "asc_B": 1.580, "price": -0.090}, COL1_MEAN, COL1_SD)
    k = len(theta)
    return EstimationResult(
        model="mixl", param_names=SPEC.param_names,
        kinds=["fixed"] * 3 + ["mean"] * 5 + ["sd"] * 5, params=theta,
        std_errors=np.full(k, 0.1), covariance=np.eye(k) * 0.01 if cov is None else cov,
        log_likelihood=-1366.35, n_observations=1636, n_respondents=409, converged=True,
        iterations=0, spec=SPEC)


def _simple(ba, bp, cov, spread=None):
    spec = ModelSpec(random=("heritage",) if spread is not None else (),
                     fixed=("price",) + (() if spread is not None else ("heritage",)), asc=())
    params = [bp, ba] + ([spread] if spread is not None else [])
    kinds = ["fixed", "mean" if spread is not None else "fixed"] + (["sd"] if spread is not None else [])
    return EstimationResult("mixl", spec.param_names, kinds, params, np.sqrt(np.diag(cov)),
                            np.asarray(cov, float), -10.0, 10, 5, True, 0, spec=spec)


def test_baseline_wtp_ratios():
    r = col1_result()
    got = {a: wtp_point(r, a)[0] for a in RANDOM}
    assert got["heritage"] == pytest.approx(0.454 / 0.090)
    assert got["certification"] == pytest.approx(13.50, abs=1e-9)
    assert abs(got["heritage"] - 5.026) < 0.5 and abs(got["certification"] - 13.450) < 0.5


def test_sd_ratio():
    _, sd = wtp_point(col1_result(), "origin")
    assert sd == pytest.approx(1.028 / 0.090)


def test_zero_coefficient_zero_wtp():
    r = _simple(0.0, -0.5, np.eye(2) * 0.01)
    assert wtp_point(r, "heritage") == (0.0, 0.0)


def test_near_zero_price_raises():
    with pytest.raises(UndefinedRatioError):
        wtp_point(_simple(0.4, 5e-7, np.eye(2)), "heritage")


def test_delta_closed_form():
    cov = np.diag([0.0, 0.01])            # se(bp) = 0 so only the numerator varies
    r = _simple(0.0, -0.1, cov)
    assert wtp_se_delta(r, "heritage") == pytest.approx(1.0, rel=1e-12)


def test_delta_needs_covariance():
    r = _simple(0.3, -0.1, np.eye(2))
    r.covariance = None
    with pytest.raises(ValidationError):
        wtp_se_delta(r, "heritage")


def test_delta_vs_parametric_bootstrap():
    cov = np.array([[0.0001, 0.00002], [0.00002, 0.01]])
    r = _simple(0.454, -0.090, cov)
    rng = np.random.default_rng(0)
    draws = rng.multivariate_normal([-0.090, 0.454], cov, size=100_000)
    boot = (draws[:, 1] / np.abs(draws[:, 0])).std()
    assert wtp_se_delta(r, "heritage") == pytest.approx(boot, rel=0.10)


def test_delta_sd_branch():
    cov = np.diag([0.0, 0.0, 0.04])
    r = _simple(0.45, -0.09, cov, spread=-0.8)       # sign of the spread is irrelevant
    assert wtp_se_delta(r, "heritage", which="sd") == pytest.approx(0.2 / 0.09)


def test_heritage_se_order_of_magnitude():
    # standard errors of a plausible magnitude for the baseline estimates
    cov = np.eye(13) * 0.0
    cov[2, 2], cov[7, 7] = 0.008 ** 2, 0.1 ** 2
    se = wtp_se_delta(col1_result(cov), "heritage")
    assert 0.1 * 1.165 < se < 10 * 1.165


def test_positive_shares_from_col1():
    shares = {a: positive_share(COL1_MEAN[a] / 0.09, COL1_SD[a] / 0.09) for a in RANDOM}
    assert shares["origin"] == pytest.approx(0.826, abs=5e-4)
    assert shares["heritage"] == pytest.approx(0.708, abs=5e-4)
    assert positive_share(0.0, 2.0) == 0.5
    assert positive_share(1.0, 0.0) == 1.0 and positive_share(-1.0, 0.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.1, 30), st.floats(0.1, 30))
def test_positive_share_monotone(m1, m2, s1, s2):
    lo, hi = sorted((m1, m2))
    assert positive_share(lo, s1) <= positive_share(hi, s1)
    if lo > 0:
        a, b = sorted((s1, s2))
        assert positive_share(lo, a) >= positive_share(lo, b)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100))
def test_wtp_scale_invariance(c):
    r = col1_result()
    scaled = col1_result()
    scaled.params = r.params * c
    for a in RANDOM:
        m0, s0 = wtp_point(r, a)
        m1, s1 = wtp_point(scaled, a)
        assert m1 == pytest.approx(m0, rel=1e-12) and s1 == pytest.approx(s0, rel=1e-12)


def test_wtp_table_and_csv(tmp_path):
    rows = wtp_table(col1_result())
    assert [r["attribute"] for r in rows] == list(RANDOM)
    write_wtp_csv(rows, tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "attribute,mean_wtp,se_mean,sd_wtp,se_sd,positive_share"
    assert len(lines) == 6


# individual WTP --------------------------------------------------------------

def _two_respondents():
    attrs = default_attributes()
    rows = []
    for r, likes in ((1, True), (2, False)):
        for t in range(4):
            pick_h = likes
            rows += [(r, t + 1, "A", int(pick_h), [0, 0, 0, 0, 1, 30]),
                     (r, t + 1, "B", int(not pick_h), [0, 0, 0, 0, 0, 15])]
    return ChoiceDataset(attrs, *map(list, zip(*rows)))


def _heritage_result(spread):
    spec = ModelSpec(random=("heritage",), fixed=("price",), asc=())
    return EstimationResult("mixl", spec.param_names, ["fixed", "mean", "sd"],
                            [-0.09, 0.45, spread], [0.01, 0.1, 0.1], np.eye(3) * 0.01,
                            -5.0, 8, 2, True, 0, spec=spec)


def test_individual_wtp_degenerate_mixture():
    d = _two_respondents()
    v = individual_wtp(_heritage_result(0.0), d, make_draws(2, 100, 1), "heritage")
    np.testing.assert_allclose(v, 0.45 / 0.09, rtol=1e-12)


def test_individual_wtp_orders_choosers():
    d = _two_respondents()
    res = _heritage_result(1.5)
    dm = make_draws(2, 200, 1)
    v = individual_wtp(res, d, dm, "heritage")
    assert v[0] > v[1]
    lo = (0.45 + 1.5 * dm.draws.min()) / 0.09
    hi = (0.45 + 1.5 * dm.draws.max()) / 0.09
    assert np.all((v >= lo) & (v <= hi))
    # direct weight computation for respondent 1
    z = dm.draws[0, :, 0]
    b = 0.45 + 1.5 * z
    u = b - 0.09 * 30 + 0.09 * 15         # utility of A relative to B
    w = (1 / (1 + np.exp(-u))) ** 4
    assert v[0] == pytest.approx(np.sum(w * b) / np.sum(w) / 0.09, rel=1e-10)


def test_individual_wtp_extreme_weights_finite():
    d = _two_respondents()
    v = individual_wtp(_heritage_result(60.0), d, make_draws(2, 100, 1), "heritage")
    assert np.all(np.isfinite(v))


def test_population_mean_close_to_point(plan):
    from dcekit.synth import simulate_choices
    from dcekit.mixl import fit_mixl
    truth = dict(fixed={"asc_A": 0.5, "asc_B": 0.6, "price": -0.09},
                 means={"heritage": 0.45}, spreads={"heritage": 0.8})
    d = simulate_choices(plan, truth, 600, seed=2)
    spec = ModelSpec(random=("heritage",), fixed=("price",))
    res = fit_mixl(d, spec)
    dm = make_draws(d.n_respondents, 100, 1)
    v = individual_wtp(res, d, dm, "heritage")
    assert abs(v.mean() - wtp_point(res, "heritage")[0]) < 0.5


# kernel density ---------------------------------------------------------------

def test_density_two_points():
    x, f = kernel_density([-1.0, 1.0], grid=(-10, 10, 2001))
    assert np.trapezoid(f, x) == pytest.approx(1.0, abs=1e-3)
    np.testing.assert_allclose(f, f[::-1], rtol=1e-12)


def test_density_standard_normal():
    z = np.random.default_rng(0).standard_normal(1000)
    x, f = kernel_density(z, grid=(0, 0, 1))
    assert abs(f[0] - 0.3989) < 0.05
    x, f = kernel_density(z)
    assert np.trapezoid(f, x) == pytest.approx(1.0, abs=1e-3)


def test_density_degenerate():
    with pytest.raises(ValidationError):
        kernel_density([2.0, 2.0, 2.0])


def test_silverman_formula():
    z = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
    sd = z.std(ddof=1)
    iqr = np.percentile(z, 75) - np.percentile(z, 25)
    assert silverman_bandwidth(z) == pytest.approx(0.9 * min(sd, iqr / 1.34) * 5 ** -0.2)


def test_density_csv(tmp_path):
    x, f = kernel_density([0.0, 1.0, 3.0], points=5)
    write_density_csv(x, f, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "x,density" and len(lines) == 6
