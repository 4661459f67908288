"""
Attitude-scale analytics: group summaries, one-way ANOVA, Ward clustering
with the agglomerative coefficient and gap statistic, and a logistic
regression for cluster membership.

Dendrograms use the scipy linkage layout: row s of the (n-1, 4) merge array
is ``[id_a, id_b, height, size]`` with ``id_a < id_b``; leaves are 0..n-1 and
the cluster formed at step s is ``n + s``.  Heights are Ward dissimilarities
obtained from squared Euclidean distances by the Lance-Williams recurrence,
which equal ``2 * n_a * n_b / (n_a + n_b) * ||c_a - c_b||**2``.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .core import AttitudeDataset, DCEError, RankDeficiencyError, ValidationError, format_number

__all__ = ["group_means", "anova_f", "ward_cluster", "agglomerative_coefficient",
           "cut_tree", "within_dispersion", "gap_statistic", "GapResult",
           "pro_heritage_flag", "standardize", "fit_logistic", "LogitResult",
           "write_clusters_csv", "write_gap_csv", "write_logit_csv"]


# ---------------------------------------------------------------------------
# group summaries and ANOVA
# ---------------------------------------------------------------------------

def group_means(data: AttitudeDataset, grouping: str):
    """Item x group means, skipping missing answers item by item.

    Returns ``(groups, table)`` where ``table[i, g]`` is the mean of item i+1
    in ``groups[g]``, groups sorted.
    """
    labels = data.grouping(grouping)
    keep = np.array([not (isinstance(v, float) and math.isnan(v)) for v in labels.tolist()])
    groups = sorted(set(labels[keep].tolist()))
    if len(groups) < 2:
        raise ValidationError(f"grouping {grouping!r} has fewer than two groups")
    table = np.empty((data.scores.shape[1], len(groups)))
    for g, lab in enumerate(groups):
        sub = data.scores[keep & (labels == lab)]
        if len(sub) == 0:
            raise ValidationError(f"group {lab!r} is empty")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            table[:, g] = np.nanmean(sub, axis=0)
    if np.isnan(table).any():
        i, g = np.argwhere(np.isnan(table))[0]
        raise ValidationError(f"group {groups[g]!r} has no answers for q{i + 1}")
    return groups, table


def anova_f(values, groups, grouping=None):
    """One-way ANOVA.  Returns (F, p_value, df_between, df_within).

    Called either as ``anova_f(values, group_labels)`` or as
    ``anova_f(data, item, grouping)`` with an :class:`AttitudeDataset` and a
    1-based item number.  Missing values (NaN) are dropped.  With zero within-group variance F is
    0 when the group means coincide and +inf otherwise.
    """
    if isinstance(values, AttitudeDataset):
        if grouping is None:
            raise ValidationError("a grouping name is required")
        return anova_f(values.scores[:, int(groups) - 1], values.grouping(grouping))
    y = np.asarray(values, dtype=float)
    g = np.asarray(groups)
    ok = ~np.isnan(y)
    if g.dtype.kind == "f":
        ok &= ~np.isnan(g)
    y, g = y[ok], g[ok]
    labels = sorted(set(g.tolist()))
    k, n = len(labels), len(y)
    if k < 2:
        raise ValidationError("ANOVA needs at least two groups")
    if n <= k:
        raise ValidationError("ANOVA needs more observations than groups")
    grand = y.mean()
    ssb = ssw = 0.0
    for lab in labels:
        yy = y[g == lab]
        ssb += len(yy) * (yy.mean() - grand) ** 2
        ssw += ((yy - yy.mean()) ** 2).sum()
    dfb, dfw = k - 1, n - k
    scale = max(1.0, float(np.abs(y).max()))
    if ssw <= 1e-14 * n * scale ** 2:
        F = 0.0 if ssb <= 1e-14 * n * scale ** 2 else math.inf
    else:
        F = (ssb / dfb) / (ssw / dfw)
    p = float(stats.f.sf(F, dfb, dfw)) if math.isfinite(F) else 0.0
    return float(F), p, dfb, dfw


# ---------------------------------------------------------------------------
# Ward clustering
# ---------------------------------------------------------------------------

def standardize(matrix) -> np.ndarray:
    """Column z-scores (sample sd); constant columns become 0."""
    x = np.asarray(matrix, dtype=float)
    sd = x.std(axis=0, ddof=1)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def ward_cluster(matrix) -> np.ndarray:
    """Ward agglomeration.  At each step the pair with the smallest Ward
    dissimilarity merges; exact ties go to the smallest (id_a, id_b) pair."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n < 2:
        raise ValidationError("need at least two observations")
    if np.isnan(x).any():
        raise ValidationError("missing scores; drop incomplete rows first")
    # explicit differences avoid cancellation for near-duplicate rows
    D = np.empty((n, n))
    for i in range(n):
        D[i] = ((x - x[i]) ** 2).sum(axis=1)
    np.fill_diagonal(D, np.inf)
    size = np.ones(n)
    ids = np.arange(n)                 # cluster id held by each slot
    active = np.ones(n, dtype=bool)
    Z = np.empty((n - 1, 4))
    for step in range(n - 1):
        m = D.min()
        cand = np.argwhere(D == m)
        pairs = np.sort(ids[cand], axis=1)
        best = np.lexsort((pairs[:, 1], pairs[:, 0]))[0]
        i, j = cand[best]
        if ids[i] > ids[j]:
            i, j = j, i
        ni, nj = size[i], size[j]
        Z[step] = [ids[i], ids[j], m, ni + nj]
        nk = size[active]
        dik, djk = D[i, active], D[j, active]
        new = ((ni + nk) * dik + (nj + nk) * djk - nk * m) / (ni + nj + nk)
        D[i, active] = new
        D[active, i] = new
        D[i, i] = np.inf
        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] = ni + nj
        ids[i] = n + step
    return Z


def _first_merge_heights(Z):
    n = len(Z) + 1
    first = np.full(n, np.nan)
    for a, b, h, _ in Z:
        for c in (int(a), int(b)):
            if c < n and np.isnan(first[c]):
                first[c] = h
    return first


def agglomerative_coefficient(Z) -> float:
    """Mean over objects of 1 - (height of its first merge) / (final height)."""
    Z = np.asarray(Z, dtype=float)
    if len(Z) < 2:
        return 0.0
    final = Z[-1, 2]
    if final <= 0:
        return 0.0
    return float(np.mean(1.0 - _first_merge_heights(Z) / final))


def cut_tree(Z, k: int) -> np.ndarray:
    """Cluster labels 0..k-1 from the first n-k merges, numbered by the
    smallest member index."""
    Z = np.asarray(Z)
    n = len(Z) + 1
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside 1..{n}")
    parent = list(range(2 * n - 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s in range(n - k):
        a, b = int(Z[s, 0]), int(Z[s, 1])
        parent[find(a)] = n + s
        parent[find(b)] = n + s
    roots = [find(i) for i in range(n)]
    relabel: dict = {}
    return np.array([relabel.setdefault(r, len(relabel)) for r in roots])


def within_dispersion(matrix, labels) -> float:
    """W_k: pooled within-cluster sum of squares about the centroids."""
    x = np.asarray(matrix, dtype=float)
    labels = np.asarray(labels)
    return float(sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum()
                     for c in np.unique(labels)))


@dataclass
class GapResult:
    k: np.ndarray
    gap: np.ndarray
    s: np.ndarray
    log_w: np.ndarray
    chosen_k: int


def _log_w_curve(x, ks):
    Z = ward_cluster(x)
    out = []
    for k in ks:
        w = within_dispersion(x, cut_tree(Z, k))
        out.append(math.log(w) if w > 0 else -math.inf)
    return np.array(out)


def gap_statistic(matrix, k_range=range(1, 11), B: int = 50, seed: int = 0,
                  threads: int = 1) -> GapResult:
    """Gap statistic for Ward trees with uniform references over each
    feature's observed range.  Chooses the smallest k with
    Gap(k) >= Gap(k+1) - s_{k+1}; falls back to the largest k."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    ks = np.array(sorted(set(int(k) for k in k_range)))
    if len(ks) == 0 or ks[0] < 1:
        raise ValidationError("k_range must contain positive integers")
    if ks[-1] > len(x):
        raise ValidationError(f"k={ks[-1]} exceeds the {len(x)} observations")
    if B < 10:
        raise ValidationError("B must be at least 10")
    lw = _log_w_curve(x, ks)
    lo, hi = x.min(axis=0), x.max(axis=0)
    seqs = np.random.SeedSequence(seed).spawn(B)

    def ref(ss):
        rng = np.random.default_rng(ss)
        return _log_w_curve(lo + (hi - lo) * rng.random(x.shape), ks)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            refs = np.array(list(ex.map(ref, seqs)))
    else:
        refs = np.array([ref(ss) for ss in seqs])
    gap = refs.mean(axis=0) - lw
    s = refs.std(axis=0) * math.sqrt(1 + 1 / B)
    chosen = int(ks[-1])
    for i in range(len(ks) - 1):
        if gap[i] >= gap[i + 1] - s[i + 1]:
            chosen = int(ks[i])
            break
    return GapResult(ks, gap, s, lw, chosen)


def pro_heritage_flag(scores, labels) -> np.ndarray:
    """1 for members of the cluster with the highest grand-mean item score."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    means = [np.nanmean(scores[labels == c]) for c in uniq]
    return (labels == uniq[int(np.argmax(means))]).astype(int)


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

@dataclass
class LogitResult:
    names: list
    coef: np.ndarray
    std_error: np.ndarray
    log_likelihood: float
    n_obs: int
    converged: bool = True
    iterations: int = 0
    message: str = ""
    covariance: np.ndarray = field(default=None, repr=False)

    @property
    def aic(self) -> float:
        return 2 * len(self.coef) - 2 * self.log_likelihood

    def as_dict(self) -> dict:
        return {n: (float(c), float(s)) for n, c, s in zip(self.names, self.coef, self.std_error)}


def _logit_ll(X, y, b):
    eta = X @ b
    return float(np.sum(y * eta - np.logaddexp(0, eta)))


def fit_logistic(y, X, names=None, add_intercept: bool = True, tol: float = 1e-8,
                 max_iter: int = 100) -> LogitResult:
    """Binary logit by iteratively reweighted least squares.

    Stops when the score max-norm is below ``tol``; standard errors from the
    inverse Fisher information.  Separation shows up as fitted
    probabilities at 0/1 and yields ``converged=False`` with a warning.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names) if names is not None else [f"x{i + 1}" for i in range(X.shape[1])]
    if add_intercept:
        X = np.column_stack([X, np.ones(len(y))])
        names = names + ["Constant"]
    if X.shape[0] != len(y):
        raise ValidationError("X and y lengths differ")
    if not set(np.unique(y)) <= {0.0, 1.0} or len(np.unique(y)) < 2:
        raise ValidationError("y must contain both 0 and 1 and nothing else")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        _, _, piv = linalg.qr(X, mode="economic", pivoting=True)
        raise RankDeficiencyError([names[i] for i in sorted(piv[rank:])])
    b = np.zeros(X.shape[1])
    converged, message, it = False, "", 0
    for it in range(1, max_iter + 1):
        p = 1 / (1 + np.exp(-(X @ b)))
        g = X.T @ (y - p)
        if np.max(np.abs(g)) < tol:
            converged = True
            it -= 1
            break
        w = p * (1 - p)
        if np.min(w) < 1e-12 and np.max(np.abs(X @ b)) > 30:
            message = "fitted probabilities at 0/1: separation"
            break
        info = X.T @ (w[:, None] * X)
        step = np.linalg.solve(info, g)
        ll0 = _logit_ll(X, y, b)
        t = 1.0
        while _logit_ll(X, y, b + t * step) < ll0 and t > 1e-10:
            t *= 0.5
        b = b + t * step
    else:
        message = "maximum iterations reached"
    if not converged:
        warnings.warn(f"logistic regression did not converge: {message}", RuntimeWarning,
                      stacklevel=2)
    p = 1 / (1 + np.exp(-(X @ b)))
    info = X.T @ ((p * (1 - p))[:, None] * X)
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.full_like(info, np.nan)
    return LogitResult(names, b, np.sqrt(np.abs(np.diag(cov))), _logit_ll(X, y, b),
                       len(y), converged, it, message, cov)


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def write_clusters_csv(resp_id, labels, flag, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["resp_id", "cluster", "pro_heritage"])
        for r, c, f in zip(resp_id, labels, flag):
            w.writerow([int(r), int(c) + 1, int(f)])


def write_gap_csv(gap: GapResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "gap", "s_k", "log_w", "chosen"])
        for k, g, s, lw in zip(gap.k, gap.gap, gap.s, gap.log_w):
            w.writerow([int(k), format_number(g), format_number(s), format_number(lw),
                        int(k == gap.chosen_k)])


def write_logit_csv(res: LogitResult, path) -> None:
    """Coefficient rows, Constant last, then Observations / Log Likelihood / AIC."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["term", "estimate", "std_error"])
        for n, c, s in zip(res.names, res.coef, res.std_error):
            w.writerow([n, format_number(c), format_number(s)])
        w.writerow(["Observations", res.n_obs, ""])
        w.writerow(["Log Likelihood", format_number(res.log_likelihood), ""])
        w.writerow(["Akaike Inf. Crit.", format_number(res.aic), ""])
