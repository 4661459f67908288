"""
Willingness-to-pay analytics.

The sign convention divides by |price coefficient|, so a desirable
attribute has positive WTP whenever the price coefficient is negative.
"""
from __future__ import annotations

import csv
import math

import numpy as np
from scipy.special import ndtr, softmax

from .core import (ChoiceDataset, DCEError, EstimationResult, ModelSpec, ValidationError,
                   format_number)
from .mixl import DrawMatrix, SimulatedLikelihood

__all__ = ["UndefinedRatioError", "wtp_point", "wtp_se_delta", "positive_share",
           "individual_wtp", "kernel_density", "silverman_bandwidth", "wtp_table",
           "write_wtp_csv", "write_density_csv", "WTP_COLUMNS"]

PRICE_EPS = 1e-6
WTP_COLUMNS = ("attribute", "mean_wtp", "se_mean", "sd_wtp", "se_sd", "positive_share")


class UndefinedRatioError(DCEError, ZeroDivisionError):
    pass


def _price(result: EstimationResult, price: str | None):
    price = price or (result.spec.price if result.spec is not None else "price")
    if price not in result.param_names:
        raise ValidationError(f"result has no coefficient {price!r}")
    i = result.index(price)
    if result.kinds[i] != "fixed":
        raise ValidationError("price coefficient must be fixed")
    bp = result.params[i]
    if abs(bp) < PRICE_EPS:
        raise UndefinedRatioError(f"|{price}| = {abs(bp):.3g} is too close to zero")
    return i, bp


def wtp_point(result: EstimationResult, attribute: str, price: str | None = None):
    """(mean WTP, WTP standard deviation) in money units."""
    _, bp = _price(result, price)
    mean = result.value(attribute) / abs(bp)
    spreads = result.random_spreads
    sd = abs(spreads[attribute][0]) / abs(bp) if attribute in spreads else 0.0
    return float(mean), float(sd)


def wtp_se_delta(result: EstimationResult, attribute: str, price: str | None = None,
                 which: str = "mean") -> float:
    """First-order delta-method standard error of b_attr/|b_price| (``which="mean"``)
    or of |spread_attr|/|b_price| (``which="sd"``)."""
    if result.covariance is None:
        raise ValidationError("result carries no covariance matrix")
    ip, bp = _price(result, price)
    name = attribute if which == "mean" else f"sd_{attribute}"
    if which not in ("mean", "sd"):
        raise ValidationError("which must be 'mean' or 'sd'")
    if name not in result.param_names:
        if which == "sd":
            return 0.0
        raise ValidationError(f"result has no coefficient {name!r}")
    ia = result.index(name)
    ba = result.params[ia]
    if which == "sd":
        ba = abs(ba)
    grad = np.zeros(len(result.params))
    grad[ia] = 1.0 / abs(bp)
    grad[ip] = -ba * np.sign(bp) / bp ** 2
    sub = np.array([ia, ip])
    cov = result.covariance[np.ix_(sub, sub)]
    var = grad[sub] @ cov @ grad[sub]
    return float(math.sqrt(var)) if var >= 0 else float("nan")


def positive_share(mean_wtp, sd_wtp) -> float:
    """Share of a normal WTP distribution above zero, Phi(mean / sd)."""
    if sd_wtp < 0:
        raise ValidationError("sd_wtp must be non-negative")
    if sd_wtp == 0:
        return 1.0 if mean_wtp > 0 else (0.5 if mean_wtp == 0 else 0.0)
    return float(ndtr(mean_wtp / sd_wtp))


def individual_wtp(result: EstimationResult, dataset: ChoiceDataset, draws: DrawMatrix,
                   attribute: str, spec: ModelSpec | None = None,
                   include_interactions: bool = True) -> np.ndarray:
    """Posterior (choice-conditional) mean WTP per respondent.

    Each draw is weighted by the respondent's panel likelihood at that draw;
    weights are normalised in the log domain.  Interaction terms on the
    attribute add ``coefficient * covariate`` for the respondent.
    """
    spec = spec or result.spec
    if spec is None:
        raise ValidationError("a model spec is required")
    _, bp = _price(result, spec.price)
    theta = np.array([result.value(n) for n in spec.param_names])
    shift = np.zeros(dataset.n_respondents)
    if include_interactions:
        for a, c in spec.interactions:
            if a == attribute:
                shift += result.value(f"{a}*{c}") * dataset.covariates[c]
    if attribute not in spec.random:
        base = result.value(attribute)
        return (base + shift) / abs(bp)
    k = list(spec.random).index(attribute)
    sim = SimulatedLikelihood(dataset, draws, spec)
    w = softmax(sim.log_kernel(theta), axis=1)                   # (N, D)
    beta_d = result.value(attribute) + abs(result.value(f"sd_{attribute}")) * sim.z[:, :, k]
    return (np.sum(w * beta_d, axis=1) + shift) / abs(bp)


def silverman_bandwidth(values) -> float:
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * len(x) ** (-0.2)


def kernel_density(values, grid=None, points: int = 512):
    """Gaussian kernel density with Silverman's rule-of-thumb bandwidth.

    ``grid`` is (min, max, points) or None, in which case it spans the data
    plus four bandwidths on each side.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        raise ValidationError("kernel density needs at least two distinct values")
    h = silverman_bandwidth(x)
    if grid is None:
        lo, hi, n = x.min() - 4 * h, x.max() + 4 * h, points
    else:
        lo, hi, n = grid
    xs = np.linspace(lo, hi, int(n))
    u = (xs[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * u ** 2).sum(axis=1) / (len(x) * h * math.sqrt(2 * math.pi))
    return xs, dens


def wtp_table(result: EstimationResult, price: str | None = None) -> list[dict]:
    """Rows of :data:`WTP_COLUMNS` for every non-ASC, non-price coefficient."""
    price = price or (result.spec.price if result.spec is not None else "price")
    rows = []
    for n, kind in zip(result.param_names, result.kinds):
        if kind == "sd" or n.startswith("asc_") or n == price:
            continue
        m, sd = wtp_point(result, n, price)
        rows.append(dict(attribute=n, mean_wtp=m,
                         se_mean=wtp_se_delta(result, n, price),
                         sd_wtp=sd, se_sd=wtp_se_delta(result, n, price, which="sd"),
                         positive_share=positive_share(m, sd)))
    return rows


def write_wtp_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WTP_COLUMNS)
        for r in rows:
            w.writerow([r["attribute"]] + [format_number(r[c]) for c in WTP_COLUMNS[1:]])


def write_density_csv(x, density, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "density"])
        for a, b in zip(x, density):
            w.writerow([format_number(a), format_number(b)])
