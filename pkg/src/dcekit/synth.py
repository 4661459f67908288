"""
Synthetic choice data and an exact-up-to-quadrature likelihood oracle.

``simulate_choices`` runs the random-utility model forwards: each respondent
draws individual coefficients, is assigned one block of cards, and picks the
utility-maximising alternative under Gumbel noise.  ``quadrature_loglik``
integrates the panel likelihood with Gauss-Hermite rules and shares no code
with the simulated likelihood it is used to check.
"""
from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

from .core import ChoiceDataset, ModelSpec, ValidationError, encode
from .design import ALT_LABELS, DesignPlan
from .mnl import mnl_probabilities

__all__ = ["default_covariates", "simulate_choices", "quadrature_loglik"]


def default_covariates(rng: np.random.Generator, n: int) -> dict:
    """Campaign indicator ~ Bernoulli(0.4)."""
    return {"campaign": (rng.random(n) < 0.4).astype(float)}


def _interaction_key(k):
    if isinstance(k, str):
        a, c = (s.strip() for s in k.split("*"))
        return a, c
    return tuple(k)


def simulate_choices(design: DesignPlan, truth: Mapping, n_respondents: int,
                     covariate_generator: Callable | None = default_covariates,
                     seed: int = 0) -> ChoiceDataset:
    """Simulate a long-format panel from a design.

    ``truth`` keys: ``fixed`` (name -> value, incl. ``asc_<alt>`` and price),
    ``means`` and ``spreads`` for random coefficients, ``interactions``
    ((attribute, covariate) or "attr*cov" -> value).  Coefficient names refer
    to coded attribute columns.
    """
    rng = np.random.default_rng(seed)
    attrs = design.attributes
    fixed = dict(truth.get("fixed", {}))
    means = dict(truth.get("means", {}))
    spreads = dict(truth.get("spreads", {}))
    inter = {_interaction_key(k): v for k, v in dict(truth.get("interactions", {})).items()}
    if set(spreads) - set(means):
        raise ValidationError("spreads given for coefficients without a mean")

    covs = covariate_generator(rng, n_respondents) if covariate_generator else {}
    covs = {k: np.asarray(v, dtype=float) for k, v in covs.items()}
    for (a, c) in inter:
        if c not in covs:
            raise ValidationError(f"interaction covariate {c!r} not generated")

    cols = [c for a in attrs for c in a.columns]
    blocks = sorted({c.block_id for c in design.cards})
    cards_by_block = {b: sorted(design.block(b), key=lambda c: c.card_id) for b in blocks}
    T = len(cards_by_block[blocks[0]])
    if any(len(v) != T for v in cards_by_block.values()):
        raise ValidationError("blocks must have equal size")
    n_alts = len(design.cards[0].alternatives) + 1
    alt_ids = list(ALT_LABELS[:n_alts])
    known = set(cols) | {f"asc_{a}" for a in alt_ids}
    unknown = (set(fixed) | set(means)) - known
    if unknown:
        raise ValidationError(f"unknown coefficients in truth: {sorted(unknown)}")

    # coded attributes per block: (T, J, K)
    coded = {b: np.stack([encode(c.levels(baseline=True), attrs) for c in cards_by_block[b]])
             for b in blocks}
    raw = {b: np.stack([[[a.value_of(lv) for a, lv in zip(attrs, alt)]
                         for alt in c.levels(baseline=True)] for c in cards_by_block[b]])
           for b in blocks}

    mean_vec = np.array([means.get(c, 0.0) + fixed.get(c, 0.0) for c in cols])
    sd_vec = np.array([abs(spreads.get(c, 0.0)) for c in cols])
    asc_vec = np.array([fixed.get(f"asc_{a}", 0.0) + means.get(f"asc_{a}", 0.0)
                        for a in alt_ids])

    block_of = rng.choice(blocks, size=n_respondents)
    beta = mean_vec + sd_vec * rng.standard_normal((n_respondents, len(cols)))
    for (a, c), v in inter.items():
        beta[:, cols.index(a)] += v * covs[c]
    gumbel = -np.log(-np.log(rng.random((n_respondents, T, n_alts))))

    resp, task, alt, chosen, values = [], [], [], [], []
    for r in range(n_respondents):
        b = block_of[r]
        u = coded[b] @ beta[r] + asc_vec + gumbel[r]
        pick = np.argmax(u, axis=1)
        for t in range(T):
            for j in range(n_alts):
                resp.append(r + 1)
                task.append(t + 1)
                alt.append(alt_ids[j])
                chosen.append(int(j == pick[t]))
                values.append(raw[b][t, j])
    return ChoiceDataset(attrs, resp, task, alt, chosen, values, covs)


def quadrature_loglik(theta, dataset: ChoiceDataset, spec: ModelSpec, nodes: int = 64) -> float:
    """Panel log-likelihood with the normal mixing integral done by
    Gauss-Hermite tensor quadrature (at most two random coefficients)."""
    if spec.n_random > 2:
        raise ValidationError("quadrature oracle supports at most 2 random coefficients")
    bf, mean, spread = spec.unpack(theta)
    x, w = np.polynomial.hermite.hermgauss(nodes)
    z1 = math.sqrt(2.0) * x
    w1 = w / math.sqrt(math.pi)
    R = spec.n_random
    if R == 0:
        Z, W = np.zeros((1, 0)), np.ones(1)
    elif R == 1:
        Z, W = z1[:, None], w1
    else:
        Z = np.array([(a, b) for a in z1 for b in z1])
        W = np.array([wa * wb for wa in w1 for wb in w1])
    names = spec.fixed_names + list(spec.random)
    X = dataset.design_tensor(names)
    chosen = dataset.chosen_index()
    owner = dataset.task_respondent_index()
    betas = np.hstack([np.tile(bf, (len(W), 1)), mean + np.abs(spread) * Z])  # (Q, K)
    total = 0.0
    for r in range(dataset.n_respondents):
        logprod = np.zeros(len(W))
        for t in np.flatnonzero(owner == r):
            # probabilities at every node: rows of betas act as separate coefficient vectors
            p = np.array([mnl_probabilities(b, X[t])[chosen[t]] for b in betas])
            logprod += np.log(p)
        m = logprod.max()
        total += m + math.log(np.sum(W * np.exp(logprod - m)))
    return total
