"""
Independent reference implementations used only by the tests.

Each oracle is written from the defining formula with plain loops and shares
no code with the package beyond data containers.
"""
import math
from fractions import Fraction

import numpy as np


def halton_point(i, base):
    """Radical inverse of integer i >= 1 in ``base`` as an exact fraction."""
    f, r = Fraction(1), Fraction(0)
    while i > 0:
        f /= base
        r += f * (i % base)
        i //= base
    return r


def logit_probs(beta, rows):
    u = [sum(b * x for b, x in zip(beta, row)) for row in rows]
    m = max(u)
    e = [math.exp(v - m) for v in u]
    s = sum(e)
    return [v / s for v in e]


def mnl_loglik_loop(beta, X, chosen):
    """X: (tasks, J, K) nested lists or array."""
    return sum(math.log(logit_probs(beta, X[t])[chosen[t]]) for t in range(len(X)))


def central_gradient(f, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def simulated_loglik_loop(bf, mean, spread, Xf, Xr, chosen, owner, z):
    """Direct average over draws of the product of logit probabilities."""
    total = 0.0
    n_resp, n_draws, _ = z.shape
    for r in range(n_resp):
        tasks = [t for t in range(len(owner)) if owner[t] == r]
        acc = 0.0
        for d in range(n_draws):
            beta_r = [m + abs(s) * zz for m, s, zz in zip(mean, spread, z[r, d])]
            beta = list(bf) + beta_r
            prod = 1.0
            for t in tasks:
                rows = [list(Xf[t][j]) + list(Xr[t][j]) for j in range(len(Xf[t]))]
                prod *= logit_probs(beta, rows)[chosen[t]]
            acc += prod
        total += math.log(acc / n_draws)
    return total


def mnl_information(cards_X, prior):
    """Sum over cards of X' (diag(p) - p p') X, cards_X: list of (J, K) arrays."""
    K = cards_X[0].shape[1]
    info = np.zeros((K, K))
    for X in cards_X:
        p = np.array(logit_probs(prior, X.tolist()))
        xbar = p @ X
        for j in range(len(X)):
            d = X[j] - xbar
            info += p[j] * np.outer(d, d)
    return info


def one_way_anova(groups):
    """(F, df_between, df_within) from lists of observations."""
    allv = [v for g in groups for v in g]
    n, k = len(allv), len(groups)
    grand = sum(allv) / n
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups)
    return (ssb / (k - 1)) / (ssw / (n - k)), k - 1, n - k


def brute_force_ward(x):
    """Naive Ward agglomeration recomputing every pairwise merge cost from the
    cluster centroids at each step.  Cost = 2 n_a n_b / (n_a + n_b) ||c_a - c_b||^2.
    Ties resolved by the smallest (min id, max id) pair."""
    x = np.asarray(x, float)
    n = len(x)
    clusters = {i: [i] for i in range(n)}
    Z = []
    for step in range(n - 1):
        best = None
        ids = sorted(clusters)
        for a_i, a in enumerate(ids):
            for b in ids[a_i + 1:]:
                ma, mb = clusters[a], clusters[b]
                ca, cb = x[ma].mean(axis=0), x[mb].mean(axis=0)
                na, nb = len(ma), len(mb)
                cost = 2.0 * na * nb / (na + nb) * float(((ca - cb) ** 2).sum())
                key = (cost, a, b)
                if best is None or key < best:
                    best = key
        cost, a, b = best
        members = clusters.pop(a) + clusters.pop(b)
        clusters[n + step] = members
        Z.append([a, b, cost, len(members)])
    return np.array(Z)


def gradient_ascent_logit(y, X, tol=1e-11, max_iter=500_000):
    """Fixed-step gradient ascent; step 4/lambda_max(X'X) is a safe bound since
    the logit Hessian is dominated by X'X/4."""
    y = np.asarray(y, float)
    X = np.asarray(X, float)
    step = 4.0 / np.linalg.eigvalsh(X.T @ X).max()
    b = np.zeros(X.shape[1])
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(X @ b)))
        g = X.T @ (y - p)
        if np.max(np.abs(g)) < tol:
            break
        b = b + step * g
    return b


def gauss_hermite_1d(f, nodes):
    """E[f(Z)] for Z ~ N(0,1) by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return float(np.sum(w * np.array([f(math.sqrt(2) * v) for v in x])) / math.sqrt(math.pi))
