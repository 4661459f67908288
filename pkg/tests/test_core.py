import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st, HealthCheck

from dcekit.core import (AttitudeDataset, AttributeSpec, ChoiceDataset, EstimationResult,
                         ModelSpec, ParseError, ValidationError, default_attributes,
                         format_number, load_attitude_csv, load_choice_csv, read_attributes,
                         read_model_spec, read_result_csv, write_attitude_csv,
                         write_choice_csv, write_result_csv, ATTITUDE_COLUMNS)

HEADER = "resp_id,task_id,alt_id,chosen,origin,processing,harvesting,certification,heritage,price\n"


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_attribute_spec_invariants():
    with pytest.raises(ValidationError):
        AttributeSpec("x", ("only",))
    with pytest.raises(ValidationError):
        AttributeSpec("x", ("a", "a"))
    with pytest.raises(ValidationError):
        AttributeSpec("p", ("1", "2"), "continuous", (2.0, 1.0))
    with pytest.raises(ValidationError):
        AttributeSpec("p", ("1", "2"), "continuous")
    a = AttributeSpec("size", ("s", "m", "l"))
    assert a.columns == ["size_m", "size_l"]
    np.testing.assert_array_equal(a.encode_levels([0, 1, 2]), [[0, 0], [1, 0], [0, 1]])


def test_default_grammar():
    attrs = default_attributes()
    assert [a.name for a in attrs][-1] == "price"
    assert attrs[-1].continuous_values == (15.0, 23.0, 30.0, 35.0)
    assert all(a.n_levels == 2 for a in attrs[:-1])


def test_minimal_file(tmp_path):
    p = _write(tmp_path, HEADER + "1,1,A,0,1,0,1,0,1,30\n1,1,B,1,0,1,0,1,0,23\n"
                                  "1,1,C,0,0,0,0,0,0,15\n")
    d = load_choice_csv(p)
    assert d.n_respondents == 1 and d.n_tasks == 1
    assert d.chosen_index().tolist() == [1]


def test_two_chosen_rejected(tmp_path):
    p = _write(tmp_path, HEADER + "1,1,A,1,1,0,1,0,1,30\n1,1,B,1,0,1,0,1,0,23\n"
                                  "1,1,C,0,0,0,0,0,0,15\n")
    with pytest.raises(ValidationError, match="respondent 1, task 1"):
        load_choice_csv(p)


def test_parse_error_carries_line(tmp_path):
    p = _write(tmp_path, HEADER + "1,1,A,0,1,0,1,0,1,30\n1,1,B,x,0,1,0,1,0,23\n")
    with pytest.raises(ParseError) as e:
        load_choice_csv(p)
    assert e.value.line == 3


def test_undeclared_value_rejected(tmp_path):
    p = _write(tmp_path, HEADER + "1,1,A,0,1,0,1,0,1,31\n1,1,B,1,0,1,0,1,0,23\n")
    with pytest.raises(ValidationError, match="price"):
        load_choice_csv(p)


def test_bad_header(tmp_path):
    p = _write(tmp_path, "resp,task\n1,1\n")
    with pytest.raises(ParseError):
        load_choice_csv(p)


def test_409_respondent_panel(tmp_path, plan):
    from dcekit.synth import simulate_choices
    d = simulate_choices(plan, {"fixed": {"price": -0.05}}, 409, seed=3)
    path = tmp_path / "big.csv"
    write_choice_csv(d, path)
    with open(path) as fh:
        assert sum(1 for _ in fh) == 4908 + 1
    back = load_choice_csv(path)
    assert back.n_respondents == 409 and back.n_tasks == 1636
    assert back.equals(d)


def test_rows_sorted_on_load(tmp_path):
    p = _write(tmp_path, HEADER + "2,1,B,1,0,1,0,1,0,23\n2,1,A,0,1,0,1,0,1,30\n"
                                  "1,1,B,0,0,1,0,1,0,23\n1,1,A,1,1,0,1,0,1,30\n")
    d = load_choice_csv(p)
    assert d.resp_id.tolist() == [1, 1, 2, 2]
    assert d.alt_id.tolist() == ["A", "B", "A", "B"]


def test_covariates_must_be_constant(tmp_path):
    p = _write(tmp_path, HEADER.strip() + ",campaign\n1,1,A,0,1,0,1,0,1,30,1\n"
                                          "1,1,B,1,0,1,0,1,0,23,0\n")
    with pytest.raises(ParseError, match="varies"):
        load_choice_csv(p)


def test_dataset_is_immutable(small_data):
    with pytest.raises(ValueError):
        small_data.values[0, 0] = 3


def _result(names, kinds, model="mnl"):
    k = len(names)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(k, k))
    return EstimationResult(model=model, param_names=names, kinds=kinds,
                            params=rng.normal(size=k), std_errors=np.abs(rng.normal(size=k)),
                            covariance=A @ A.T, log_likelihood=-1366.35,
                            n_observations=1636, n_respondents=409, converged=True,
                            iterations=7)


def test_result_asc_only(tmp_path):
    r = _result(["asc_A", "asc_B"], ["fixed", "fixed"])
    write_result_csv(r, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 1 + 2


def test_result_five_random_roundtrip(tmp_path):
    spec = ModelSpec(random=("origin", "processing", "harvesting", "certification",
                             "heritage"), fixed=("price",))
    names = spec.param_names
    kinds = ["fixed"] * 3 + ["mean"] * 5 + ["sd"] * 5
    r = _result(names, kinds, "mixl")
    r.spec = spec
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_result_csv(r, p1)
    back = read_result_csv(p1)
    assert back.param_names == names
    assert sum(k == "sd" for k in back.kinds) == 5
    np.testing.assert_allclose(back.params, r.params, rtol=1e-12)
    np.testing.assert_allclose(back.covariance, r.covariance, rtol=1e-12)
    assert back.spec == spec
    write_result_csv(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a.meta").read_text() == (tmp_path / "b.meta").read_text()


def test_information_criteria_identity():
    r = _result(["a", "b", "c"], ["fixed"] * 3)
    assert r.aic == pytest.approx(2 * 3 - 2 * r.log_likelihood)
    assert r.bic == pytest.approx(3 * math.log(1636) - 2 * r.log_likelihood)


def test_baseline_aic_consistent_with_13_parameters():
    # 3 fixed + 5 means + 5 spreads
    r = EstimationResult("mixl", [f"p{i}" for i in range(13)], ["fixed"] * 13,
                         np.zeros(13), np.zeros(13), None, -1366.350, 1636, 409, True, 0)
    assert r.aic == pytest.approx(2758.700, abs=1e-6)


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 6), st.integers(1, 4), st.integers(2, 4), st.integers(0, 10_000))
def test_ingestion_roundtrip_property(tmp_path, n_resp, n_tasks, n_alts, seed):
    rng = np.random.default_rng(seed)
    attrs = default_attributes()
    prices = np.array(attrs[-1].continuous_values)
    resp, task, alt, chosen, vals = [], [], [], [], []
    for r in range(n_resp):
        for t in range(n_tasks):
            pick = rng.integers(n_alts)
            for j in range(n_alts):
                resp.append(r + 10)
                task.append(t + 1)
                alt.append("ABCD"[j])
                chosen.append(int(j == pick))
                vals.append(list(rng.integers(0, 2, 5)) + [prices[rng.integers(4)]])
    covs = {"campaign": rng.integers(0, 2, n_resp).astype(float)}
    d = ChoiceDataset(attrs, resp, task, alt, chosen, vals, covs)
    path = tmp_path / f"rt_{seed}.csv"
    write_choice_csv(d, path)
    assert load_choice_csv(path).equals(d)


def test_format_number_plain_decimal():
    assert format_number(1e-7) == "0.0000001"
    assert format_number(1234567.0) == "1234567"
    assert format_number(-0.5) == "-0.5"
    assert float(format_number(0.1 + 0.2)) == 0.1 + 0.2


def test_model_spec_rules():
    with pytest.raises(ValidationError):
        ModelSpec(random=("origin",), fixed=("origin",))
    s = ModelSpec(random=("heritage",), fixed=("price",), interactions=("heritage*campaign",))
    assert s.param_names == ["asc_A", "asc_B", "price", "heritage*campaign", "heritage",
                             "sd_heritage"]
    th = s.pack({"price": -1}, {"heritage": 2}, {"heritage": 3})
    bf, m, sd = s.unpack(th)
    assert bf.tolist() == [0, 0, -1, 0] and m.tolist() == [2] and sd.tolist() == [3]


def test_spec_and_attribute_files(tmp_path):
    p = _write(tmp_path, "random = origin,heritage\nfixed = price\n"
                         "interactions = heritage*campaign\ndraws = 100\nseed = 42\n", "s.txt")
    spec, extra = read_model_spec(p)
    assert spec.random == ("origin", "heritage")
    assert spec.interactions == (("heritage", "campaign"),)
    assert extra == {"draws": "100", "seed": "42"}
    p = _write(tmp_path, "origin = imported,local\nprice = 15,23,30,35\ncontinuous = price\n",
               "a.txt")
    attrs = read_attributes(p)
    assert attrs[1].continuous_values == (15.0, 23.0, 30.0, 35.0)


def test_attitude_roundtrip_and_missing(tmp_path):
    rng = np.random.default_rng(1)
    n = 8
    scores = rng.integers(1, 6, (n, 16)).astype(float)
    scores[2, 5] = np.nan
    covs = {c: rng.integers(0, 2, n).astype(float) for c in ATTITUDE_COLUMNS[17:-1]}
    covs["income"][0] = np.nan
    d = AttitudeDataset(np.arange(1, n + 1), scores, covs, ["T1"] * 4 + ["T2"] * 4)
    path = tmp_path / "att.csv"
    write_attitude_csv(d, path)
    back = load_attitude_csv(path)
    np.testing.assert_array_equal(back.scores, scores)
    assert np.isnan(back.covariates["income"][0])
    assert back.complete_rows().sum() == n - 1
    assert back.complete_rows(["income"]).sum() == n - 2


def test_attitude_range_checked():
    with pytest.raises(ValidationError, match="outside"):
        AttitudeDataset([1], np.full((1, 16), 6.0), {}, ["x"])
