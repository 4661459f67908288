"""
Panel mixed logit with independent normal random coefficients, estimated by
simulated maximum likelihood.

For respondent n with draws z_nd the simulated likelihood is

    P_n = (1/D) sum_d prod_t L_nt(b_nd),   b_nd = mean + |spread| * z_nd

and the objective is sum_n log P_n.  Products over tasks and the average
over draws are both taken in the log domain.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtri

from .core import ChoiceDataset, EstimationResult, ModelSpec, ValidationError
from .mnl import MNLConfig, check_rank, fit_mnl

__all__ = ["PRIMES", "radical_inverse", "halton", "DrawConfig", "DrawMatrix",
           "make_draws", "simulated_loglik", "respondent_loglik", "SimulatedLikelihood",
           "MixlConfig", "fit_mixl", "fd_gradient", "fd_hessian"]

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)
CHUNK = 128  # respondents per work unit; fixed so results do not depend on threads


def radical_inverse(indices, base: int) -> np.ndarray:
    """Van der Corput radical inverse of non-negative integers in ``base``."""
    n = np.array(indices, dtype=np.int64)
    out = np.zeros(n.shape, dtype=float)
    f = 1.0 / base
    while np.any(n > 0):
        n, digit = np.divmod(n, base)
        out += digit * f
        f /= base
    return out


def halton(n_points: int, dims: int, burn: int = 0) -> np.ndarray:
    """First ``n_points`` Halton points after skipping ``burn``, shape (n, dims)."""
    if dims > len(PRIMES):
        raise ValidationError(f"at most {len(PRIMES)} Halton dimensions are supported")
    idx = np.arange(burn + 1, burn + n_points + 1)
    return np.column_stack([radical_inverse(idx, p) for p in PRIMES[:dims]]) if dims else \
        np.zeros((n_points, 0))


@dataclass(frozen=True)
class DrawConfig:
    generator: str = "halton"   # or "pseudo"
    burn: int = 50
    seed: int | None = None
    shift: bool = False         # random Cranley-Patterson shift of the Halton points

    def __post_init__(self):
        if self.generator not in ("halton", "pseudo"):
            raise ValidationError(f"unknown draw generator {self.generator!r}")


@dataclass(frozen=True, eq=False)
class DrawMatrix:
    draws: np.ndarray
    generator_tag: str
    primes: tuple
    burn: int
    seed: int | None

    @property
    def n_respondents(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    @property
    def dims(self) -> int:
        return self.draws.shape[2]


def make_draws(n_respondents: int, n_draws: int, dims: int,
               config: DrawConfig | None = None) -> DrawMatrix:
    """Standard-normal draws, shape (n_respondents, n_draws, dims).

    Halton points run contiguously: respondent r gets points
    ``[r * n_draws, (r + 1) * n_draws)`` of the sequence after the burn-in.
    """
    cfg = config or DrawConfig()
    if dims > len(PRIMES):
        raise ValidationError(f"dims={dims} exceeds the {len(PRIMES)}-prime table")
    total = n_respondents * n_draws
    if cfg.generator == "halton":
        u = halton(total, dims, cfg.burn)
        if cfg.shift:
            rng = np.random.default_rng(cfg.seed)
            u = (u + rng.random(dims)) % 1.0
            u = np.clip(u, 1e-12, 1 - 1e-12)
        z = ndtri(u)
    else:
        z = np.random.default_rng(cfg.seed).standard_normal((total, dims))
    z = z.reshape(n_respondents, n_draws, dims)
    z.setflags(write=False)
    return DrawMatrix(z, cfg.generator, PRIMES[:dims] if cfg.generator == "halton" else (),
                      cfg.burn, cfg.seed)


class SimulatedLikelihood:
    """Precomputed arrays for repeated evaluation of the simulated log-likelihood."""

    def __init__(self, dataset: ChoiceDataset, draws: DrawMatrix | np.ndarray,
                 spec: ModelSpec, threads: int = 1):
        dataset.check_spec(spec)
        z = draws.draws if isinstance(draws, DrawMatrix) else np.asarray(draws, float)
        if z.ndim != 3 or z.shape[0] != dataset.n_respondents or z.shape[2] != spec.n_random:
            raise ValidationError(
                f"draws must be (n_respondents={dataset.n_respondents}, n_draws, "
                f"{spec.n_random}); got {z.shape}")
        self.spec = spec
        self.threads = max(1, int(threads))
        self.Xf = dataset.design_tensor(spec.fixed_names)
        self.Xr = dataset.design_tensor(list(spec.random))
        self.chosen = dataset.chosen_index()
        self.task_resp = dataset.task_respondent_index()
        self.z = z
        self.n_resp = dataset.n_respondents
        self.n_tasks = dataset.n_tasks
        # respondent r owns tasks [start[r], start[r+1])
        self.start = np.searchsorted(self.task_resp, np.arange(self.n_resp + 1))
        self.balanced = bool(np.all(np.diff(self.start) == self.start[1]))
        self.chunks = [(a, min(a + CHUNK, self.n_resp)) for a in range(0, self.n_resp, CHUNK)]

    def _chunk(self, lo, hi, bf, mean, spread):
        t0, t1 = self.start[lo], self.start[hi]
        n, T = hi - lo, (t1 - t0) // max(hi - lo, 1)
        beta = mean + spread * self.z[lo:hi]                    # (n, D, R)
        if self.balanced:
            J = self.Xr.shape[1]
            Xr = self.Xr[t0:t1].reshape(n, T * J, -1)
            v = np.matmul(Xr, beta.transpose(0, 2, 1))          # (n, T*J, D)
            v = v.reshape(n * T, J, -1)
        else:
            v = np.matmul(self.Xr[t0:t1],
                          beta[self.task_resp[t0:t1] - lo].transpose(0, 2, 1))
        v += (self.Xf[t0:t1] @ bf)[:, :, None]                  # (tasks, J, D)
        vmax = v.max(axis=1)
        lse = vmax + np.log(np.exp(v - vmax[:, None, :]).sum(axis=1))
        lp = v[np.arange(t1 - t0), self.chosen[t0:t1], :] - lse  # (tasks, D)
        if self.balanced:
            return lp.reshape(n, T, -1).sum(axis=1)
        return np.add.reduceat(lp, self.start[lo:hi] - t0, axis=0)

    def log_kernel(self, theta) -> np.ndarray:
        """log prod_t L_nt at every draw, shape (n_respondents, n_draws)."""
        bf, mean, spread = self.spec.unpack(theta)
        spread = np.abs(spread)
        jobs = self.chunks
        if self.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                parts = list(ex.map(lambda c: self._chunk(c[0], c[1], bf, mean, spread), jobs))
        else:
            parts = [self._chunk(lo, hi, bf, mean, spread) for lo, hi in jobs]
        return np.concatenate(parts, axis=0)

    def respondent_loglik(self, theta) -> np.ndarray:
        lk = self.log_kernel(theta)
        return logsumexp(lk, axis=1) - math.log(lk.shape[1])

    def __call__(self, theta) -> float:
        return float(np.sum(self.respondent_loglik(theta)))


def simulated_loglik(theta, dataset: ChoiceDataset, draws, spec: ModelSpec,
                     threads: int = 1) -> float:
    """Simulated panel log-likelihood at ``theta`` (``spec.param_names`` order)."""
    return SimulatedLikelihood(dataset, draws, spec, threads)(theta)


def respondent_loglik(theta, dataset, draws, spec, threads: int = 1) -> np.ndarray:
    return SimulatedLikelihood(dataset, draws, spec, threads).respondent_loglik(theta)


def _steps(theta, rel):
    return rel * np.maximum(np.abs(theta), 1.0)


def fd_gradient(f, theta, rel: float = 1e-5, free=None) -> np.ndarray:
    """Central finite-difference gradient with steps ``rel * max(|theta_i|, 1)``."""
    theta = np.asarray(theta, float)
    h = _steps(theta, rel)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        if free is not None and not free[i]:
            continue
        e = np.zeros_like(theta)
        e[i] = h[i]
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h[i])
    return g


def fd_hessian(f, theta, rel: float = 1e-4, grad_rel: float = 1e-5, free=None) -> np.ndarray:
    """Central differences of :func:`fd_gradient`; returned unsymmetrised."""
    theta = np.asarray(theta, float)
    h = _steps(theta, rel)
    k = len(theta)
    H = np.zeros((k, k))
    for i in range(k):
        if free is not None and not free[i]:
            continue
        e = np.zeros(k)
        e[i] = h[i]
        H[:, i] = (fd_gradient(f, theta + e, grad_rel, free)
                   - fd_gradient(f, theta - e, grad_rel, free)) / (2 * h[i])
    if free is not None:
        H = H * np.outer(free, free)
    return H


@dataclass
class MixlConfig:
    n_draws: int = 100
    tol: float = 1e-6
    ll_tol: float = 1e-4
    max_iter: int = 500
    seed: int | None = 42
    draws: DrawConfig = field(default_factory=DrawConfig)
    start_spread: float = 0.5
    grad_step: float = 1e-5
    hess_step: float = 1e-4
    hold: dict = field(default_factory=dict)   # parameter name -> value kept fixed
    threads: int = 1


def fit_mixl(dataset: ChoiceDataset, spec: ModelSpec, config: MixlConfig | None = None,
             draws: DrawMatrix | None = None, start=None) -> EstimationResult:
    """Simulated maximum likelihood for the panel mixed logit.

    BFGS ascent on the simulated log-likelihood with central finite-difference
    gradients, keeping one draw matrix throughout.  Stops when the largest
    parameter change is below ``tol``, or when the achieved and the predicted
    log-likelihood gains both fall below ``ll_tol``.  Standard errors are taken
    from the finite-difference Hessian at the optimum.
    """
    cfg = config or MixlConfig()
    if spec.n_random < 1:
        raise ValidationError("mixed logit needs at least one random coefficient")
    names = spec.param_names
    unknown = set(cfg.hold) - set(names)
    if unknown:
        raise ValidationError(f"cannot hold unknown parameters {sorted(unknown)}")
    if draws is None:
        dcfg = cfg.draws
        if dcfg.seed is None and cfg.seed is not None:
            dcfg = DrawConfig(dcfg.generator, dcfg.burn, cfg.seed, dcfg.shift)
        draws = make_draws(dataset.n_respondents, cfg.n_draws, spec.n_random, dcfg)
    sim = SimulatedLikelihood(dataset, draws, spec, threads=cfg.threads)
    check_rank(np.concatenate([sim.Xf, sim.Xr], axis=2), spec.mnl_names())

    free = np.array([n not in cfg.hold for n in names])
    if start is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mnl = fit_mnl(dataset, spec, MNLConfig(tol=1e-8))
        theta = np.concatenate([mnl.params, np.full(spec.n_random, cfg.start_spread)])
        cov0 = mnl.covariance
    else:
        theta = np.asarray(start, float).copy()
        cov0 = None
    for n, v in cfg.hold.items():
        theta[names.index(n)] = v

    def negll(t):
        return -sim(t)

    def grad(t):
        return -fd_gradient(sim, t, cfg.grad_step, free)

    # initial inverse Hessian: MNL covariance on the fixed/mean block
    k = len(theta)
    B = np.eye(k)
    if cov0 is not None and np.all(np.isfinite(cov0)):
        m = spec.n_fixed + spec.n_random
        B[:m, :m] = cov0
        d = np.diag(cov0)[spec.n_fixed:m]
        B[m:, m:] = np.diag(d)
    B = B * np.outer(free, free)

    f = negll(theta)
    g = grad(theta)
    converged, message, it = False, "", 0
    for it in range(1, cfg.max_iter + 1):
        p = -B @ g
        slope = g @ p
        if slope >= 0:
            B = np.diag(np.where(free, 1.0 / np.maximum(np.abs(g), 1.0), 0.0))
            p = -B @ g
            slope = g @ p
        t, accepted = 1.0, False
        for _ in range(40):
            cand = theta + t * p
            fc = negll(cand)
            if np.isfinite(fc) and fc <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = "line search failed"
            break
        gc = grad(cand)
        s, y = cand - theta, gc - g
        dll = f - fc
        theta, f, g = cand, fc, gc
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(k)
            B = (I - rho * np.outer(s, y)) @ B @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
        predicted = 0.5 * abs(g @ B @ g)
        if np.max(np.abs(s)) < cfg.tol or (dll < cfg.ll_tol and predicted < cfg.ll_tol):
            converged = True
            break
    else:
        message = "maximum iterations reached"

    H = fd_hessian(sim, theta, cfg.hess_step, cfg.grad_step, free)
    Hs = 0.5 * (H + H.T)
    fi = np.flatnonzero(free)
    cov = np.full((k, k), np.nan)
    se_ok = True
    try:
        neg = -Hs[np.ix_(fi, fi)]
        evals = np.linalg.eigvalsh(neg)
        if evals.min() <= 0:
            se_ok = False
            message = (message + "; " if message else "") + "Hessian not negative definite"
        cov[np.ix_(fi, fi)] = np.linalg.inv(neg)
    except np.linalg.LinAlgError:
        se_ok = False
        message = (message + "; " if message else "") + "singular Hessian"
    # report |spread|; the sign flip carries into the covariance
    sign = np.ones(k)
    sd_slice = slice(spec.n_fixed + spec.n_random, k)
    sign[sd_slice] = np.where(theta[sd_slice] < 0, -1.0, 1.0)
    params = theta * sign
    cov = cov * np.outer(sign, sign)
    diag = np.diag(cov)
    se = np.where(diag > 0, np.sqrt(np.where(diag > 0, diag, 0.0)), np.nan)
    if not converged:
        warnings.warn(f"mixed logit did not converge: {message}", RuntimeWarning, stacklevel=2)
    kinds = ["fixed"] * spec.n_fixed + ["mean"] * spec.n_random + ["sd"] * spec.n_random
    res = EstimationResult(
        model="mixl", param_names=names, kinds=kinds, params=params, std_errors=se,
        covariance=cov, log_likelihood=-f, n_observations=dataset.n_tasks,
        n_respondents=dataset.n_respondents, converged=converged, iterations=it,
        free=free, se_reliable=se_ok, message=message, spec=spec, hessian=H)
    return res
