"""
Conditional (multinomial) logit: probabilities, log-likelihood, score,
Hessian and a Newton-Raphson fitter.

All functions take the coefficient vector in ``spec.mnl_names()`` order,
i.e. random coefficients of a mixed spec are treated as fixed at their
means.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .core import ChoiceDataset, EstimationResult, ModelSpec, RankDeficiencyError

__all__ = ["mnl_probabilities", "mnl_loglik", "mnl_gradient", "mnl_hessian",
           "fit_mnl", "MNLConfig", "check_rank"]


def mnl_probabilities(beta, rows) -> np.ndarray:
    """Logit choice probabilities for one task (``rows``: J x K) or a stack
    of tasks (N x J x K)."""
    rows = np.asarray(rows, dtype=float)
    v = rows @ np.asarray(beta, dtype=float)
    v = v - v.max(axis=-1, keepdims=True)
    ev = np.exp(v)
    return ev / ev.sum(axis=-1, keepdims=True)


def _tensor(dataset: ChoiceDataset, spec: ModelSpec):
    return dataset.design_tensor(spec.mnl_names()), dataset.chosen_index()


def _loglik_arrays(beta, X, chosen):
    v = X @ beta
    return v[np.arange(len(chosen)), chosen] - logsumexp(v, axis=1)


def mnl_loglik(beta, dataset: ChoiceDataset, spec: ModelSpec) -> float:
    X, chosen = _tensor(dataset, spec)
    return float(np.sum(_loglik_arrays(np.asarray(beta, float), X, chosen)))


def _grad_arrays(beta, X, chosen):
    p = mnl_probabilities(beta, X)
    xbar = np.einsum("nj,njk->nk", p, X)
    return (X[np.arange(len(chosen)), chosen] - xbar).sum(axis=0)


def _hess_arrays(beta, X):
    p = mnl_probabilities(beta, X)
    xbar = np.einsum("nj,njk->nk", p, X)
    dev = X - xbar[:, None, :]
    return -np.einsum("nj,njk,njl->kl", p, dev, dev)


def mnl_gradient(beta, dataset: ChoiceDataset, spec: ModelSpec) -> np.ndarray:
    """Score: sum over tasks of x_chosen - E_p[x]."""
    X, chosen = _tensor(dataset, spec)
    return _grad_arrays(np.asarray(beta, float), X, chosen)


def mnl_hessian(beta, dataset: ChoiceDataset, spec: ModelSpec) -> np.ndarray:
    X, _ = _tensor(dataset, spec)
    return _hess_arrays(np.asarray(beta, float), X)


def check_rank(X, names, rtol=1e-10):
    """Raise RankDeficiencyError naming columns that add no within-task variation."""
    dev = (X - X.mean(axis=1, keepdims=True)).reshape(-1, X.shape[2])
    if dev.shape[1] == 0:
        return
    _, r, piv = scipy.linalg.qr(dev, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = rtol * max(diag.max() if diag.size else 0.0, 1.0) * max(dev.shape)
    rank = int(np.sum(diag > tol))
    if rank < dev.shape[1]:
        raise RankDeficiencyError([names[i] for i in sorted(piv[rank:])])


@dataclass
class MNLConfig:
    tol: float = 1e-8
    max_iter: int = 200
    max_halvings: int = 40


def fit_mnl(dataset: ChoiceDataset, spec: ModelSpec, config: MNLConfig | None = None,
            start=None) -> EstimationResult:
    """Maximum likelihood by Newton-Raphson with step halving.

    Converged when the max-norm of the score drops below ``config.tol``.
    Standard errors come from the inverse negative Hessian.  Quasi-separated
    data (probabilities driven to 0/1) returns an unconverged result and
    emits a RuntimeWarning rather than raising.
    """
    cfg = config or MNLConfig()
    names = spec.mnl_names()
    dataset.check_spec(spec)
    X, chosen = _tensor(dataset, spec)
    check_rank(X, names)
    beta = np.zeros(len(names)) if start is None else np.asarray(start, float).copy()
    ll = np.sum(_loglik_arrays(beta, X, chosen))
    converged, message, it = False, "", 0
    for it in range(1, cfg.max_iter + 1):
        g = _grad_arrays(beta, X, chosen)
        if np.max(np.abs(g), initial=0.0) < cfg.tol:
            converged = True
            it -= 1
            break
        H = _hess_arrays(beta, X)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-H, g, rcond=None)[0]
        t = 1.0
        for _ in range(cfg.max_halvings):
            trial = beta + t * step
            ll_trial = np.sum(_loglik_arrays(trial, X, chosen))
            if np.isfinite(ll_trial) and ll_trial >= ll:
                break
            t *= 0.5
        else:
            message = "line search failed"
            break
        beta, ll = trial, ll_trial
    else:
        g = _grad_arrays(beta, X, chosen)
        converged = np.max(np.abs(g), initial=0.0) < cfg.tol
    p = mnl_probabilities(beta, X)
    if converged and len(beta):
        # a vanishing score can also mean estimates drifting off to infinity:
        # under separation the curvature collapses along the diverging direction
        ev = np.linalg.eigvalsh(-_hess_arrays(beta, X))
        ref = np.linalg.eigvalsh(-_hess_arrays(np.zeros_like(beta), X)).max()
        if ev.min() < 1e-8 * max(ref, 1e-300):
            converged = False
            message = "information matrix nearly singular: separation suspected"
    if not converged:
        if np.max(p) > 1 - 1e-10 or np.max(np.abs(beta), initial=0.0) > 50:
            message = message or "probabilities approach 0/1: separation suspected"
        message = message or "maximum iterations reached"
        warnings.warn(f"MNL did not converge: {message}", RuntimeWarning, stacklevel=2)
    H = _hess_arrays(beta, X)
    se_ok = True
    try:
        cov = np.linalg.inv(-H)
        se_ok = bool(np.all(np.diag(cov) > 0))
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(-H)
        se_ok = False
    se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    kinds = ["fixed"] * spec.n_fixed + ["mean"] * spec.n_random
    return EstimationResult(
        model="mnl", param_names=names, kinds=kinds, params=beta, std_errors=se,
        covariance=cov, log_likelihood=float(ll), n_observations=dataset.n_tasks,
        n_respondents=dataset.n_respondents, converged=bool(converged), iterations=it,
        se_reliable=se_ok, message=message, spec=spec)
