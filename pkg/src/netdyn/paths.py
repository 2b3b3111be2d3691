"""Sample paths between waves: feasibility, probability, score, information.

A sample path lists the micro-steps (i_r, j_r) between two waves in order,
with j_r = i_r encoding an opportunity the actor declined.  Waiting times are
integrated out, so the path probability factors into a count term (the
probability that exactly R opportunities occur in the period) and a product
of actor-selection and choice probabilities along the replayed states.

The count term is the exact Poisson probability when rates are constant.
With rate effects it uses a normal approximation to the convolution of
exponential waiting times, except at R = 0 where the exact survival
probability is available.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .digraph import Digraph
from .model import ModelEvaluator, ModelSpec, Parameters

__all__ = [
    "SamplePath",
    "PathReplay",
    "ApproximationWarning",
    "validate_parity",
    "initial_path",
    "kappa_poisson",
    "log_kappa_poisson",
    "kappa_normal_approx",
    "path_log_probability",
    "complete_data_score",
    "complete_data_information",
    "beta_block_slice",
    "dump_path",
]

logger = logging.getLogger(__name__)

#: below this path length the normal approximation to the count term is shaky
SHORT_PATH_WARN = 30


class ApproximationWarning(UserWarning):
    """The normal-approximation count term was used outside its comfort zone."""


@dataclass
class SamplePath:
    """Ordered micro-steps for one period; steps are (actor, target) pairs."""

    steps: list
    period: int = 0

    def __post_init__(self):
        self.steps = [(int(i), int(j)) for i, j in self.steps]

    @property
    def length(self) -> int:
        return len(self.steps)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.steps:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        si = np.array([s[0] for s in self.steps], dtype=np.int64)
        sj = np.array([s[1] for s in self.steps], dtype=np.int64)
        return si, sj

    def end_state(self, start: Digraph) -> Digraph:
        g = start.copy()
        for i, j in self.steps:
            if i != j:
                g.toggle(i, j)
        return g

    def copy(self) -> "SamplePath":
        return SamplePath(list(self.steps), self.period)


class PathReplay:
    """Lazy traversal of the states x^(0), x^(1), ... along a path.

    ``traverse`` yields (r, state, (i_r, j_r)) where ``state`` is the network
    before step r, mutated in place between yields; callers must copy it if
    they need to keep it.  Total rates per visited state are cached on first
    computation for reuse by the count-term formulas.
    """

    def __init__(self, start: Digraph, path: SamplePath) -> None:
        self.start = start
        self.path = path
        self._lambdas: Optional[np.ndarray] = None

    def traverse(self):
        g = self.start.copy()
        for r, (i, j) in enumerate(self.path.steps, start=1):
            yield r, g, (i, j)
            if i != j:
                g.toggle(i, j)

    def lambda_totals(self, params: Parameters, ev: ModelEvaluator) -> np.ndarray:
        """Total rates at x^(0) .. x^(R) (the last entry is the end state)."""
        if self._lambdas is None:
            period = self.path.period
            vals = []
            g = self.start.copy()
            vals.append(ev.lambdas(g, params, period).sum())
            for i, j in self.path.steps:
                if i != j:
                    g.toggle(i, j)
                vals.append(ev.lambdas(g, params, period).sum())
            self._lambdas = np.asarray(vals)
        return self._lambdas


def validate_parity(path: SamplePath, start: Digraph, end: Digraph) -> bool:
    """True iff each off-diagonal dyad is toggled an odd number of times
    exactly when its value differs between the waves."""
    if start.n != end.n:
        raise ValueError("waves must have the same number of actors")
    counts: dict = {}
    for i, j in path.steps:
        if i != j:
            counts[(i, j)] = counts.get((i, j), 0) + 1
    n = start.n
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            odd = counts.get((i, j), 0) % 2 == 1
            if odd != (start.a[i, j] != end.a[i, j]):
                return False
    return True


def initial_path(start: Digraph, end: Digraph, rng: np.random.Generator,
                 period: int = 0) -> SamplePath:
    """Minimal feasible path: each differing dyad toggled once, random order."""
    diffs = start.differing_dyads(end)
    order = rng.permutation(len(diffs))
    return SamplePath([diffs[k] for k in order], period=period)


# ---------------------------------------------------------------------------
# count term: probability of exactly R opportunities in the period


def log_kappa_poisson(alpha_m: float, n: int, duration: float, R: int) -> float:
    if alpha_m <= 0.0 or duration <= 0.0 or n <= 0 or R < 0:
        raise ValueError("kappa_poisson needs positive rate, duration, n and R >= 0")
    mean = n * alpha_m * duration
    return -mean + R * math.log(mean) - math.lgamma(R + 1)


def kappa_poisson(alpha_m: float, n: int, duration: float, R: int) -> float:
    """Probability of exactly R opportunities under constant rates."""
    return math.exp(log_kappa_poisson(alpha_m, n, duration, R))


def _log_kappa_normal(lambdas: np.ndarray, duration: float) -> float:
    """Normal-approximation count term from the total rates x^(0)..x^(R)."""
    lam_before = lambdas[:-1]
    lam_end = lambdas[-1]
    mu = float(np.sum(1.0 / lam_before))
    sigma2 = float(np.sum(1.0 / lam_before**2))
    return (
        -math.log(lam_end)
        - 0.5 * math.log(2.0 * math.pi * sigma2)
        - (duration - mu) ** 2 / (2.0 * sigma2)
    )


def kappa_normal_approx(
    path: SamplePath,
    start: Digraph,
    params: Parameters,
    model: ModelSpec,
    duration: float,
) -> float:
    """Normal-approximation probability of the opportunity count; needs R >= 1."""
    if path.length == 0:
        raise ValueError("the normal approximation is undefined for an empty path")
    ev = ModelEvaluator(model, start.n)
    lambdas = PathReplay(start, path).lambda_totals(params, ev)
    return math.exp(_log_kappa_normal(lambdas, duration))


def _log_kappa(path, start, params, model, duration, ev, replay) -> float:
    R = path.length
    if model.constant_rates:
        return log_kappa_poisson(params.rates[path.period], start.n, duration, R)
    if R == 0:
        # exact survival probability: no opportunity before the period ends
        lam0 = ev.lambdas(start, params, path.period).sum()
        return -lam0 * duration
    if R < SHORT_PATH_WARN:
        warnings.warn(
            f"normal-approximation count term used with R={R} < {SHORT_PATH_WARN}; "
            "it is derived for long paths",
            ApproximationWarning,
            stacklevel=3,
        )
    return _log_kappa_normal(replay.lambda_totals(params, ev), duration)


# ---------------------------------------------------------------------------
# path probability


def path_log_probability(
    path: SamplePath,
    start: Digraph,
    params: Parameters,
    model: ModelSpec,
    duration: float,
    evaluator: Optional[ModelEvaluator] = None,
) -> float:
    """Log probability of a sample path given the starting wave.

    Returns -inf (rather than raising) when a step is impossible, e.g. a
    structural-zero toggle or a keep step when keeping is disallowed, so
    samplers can reject such candidates gracefully.
    """
    params.validate(model)
    ev = evaluator if evaluator is not None else ModelEvaluator(model, start.n)
    period = path.period
    beta = params.beta_for_period(period)
    replay = PathReplay(start, path)

    si, sj = path.arrays()
    ok, choice_lp = ev.segment_choice_logprobs(start.a.copy(), si, sj, beta)
    if not ok:
        logger.debug("impossible micro-step in path (structural zero or forbidden keep)")
        return float("-inf")

    if model.constant_rates:
        log_pi = -path.length * math.log(start.n)
    else:
        lam_tot = replay.lambda_totals(params, ev)
        log_pi = 0.0
        for r, g, (i, j) in replay.traverse():
            lam_i = ev.lambdas(g, params, period)[i]
            log_pi += math.log(lam_i) - math.log(lam_tot[r - 1])

    return _log_kappa(path, start, params, model, duration, ev, replay) + log_pi + float(
        choice_lp.sum()
    )


# ---------------------------------------------------------------------------
# score and information


def beta_block_slice(params: Parameters, model: ModelSpec, period: int) -> slice:
    """Location of the period's objective-function block in the flat vector."""
    P = params.n_periods
    K = len(params.rate_coefs)
    L = model.n_effects
    off = P + K
    if model.per_period_beta:
        return slice(off + period * L, off + (period + 1) * L)
    return slice(off, off + L)


def _lambda_matrix_grads(ev, g, params, period):
    """lambda_i values and their gradients w.r.t. the rate block (alpha_m, coefs)."""
    lam = ev.lambdas(g, params, period)
    rs = ev.rate_stats_matrix(g)  # (n, K)
    # d lambda_i / d alpha_m = lam_i / alpha_m ; d lambda_i / d c_k = lam_i * r_ik
    return lam, rs


def complete_data_score(
    path: SamplePath,
    start: Digraph,
    params: Parameters,
    model: ModelSpec,
    duration: float,
    evaluator: Optional[ModelEvaluator] = None,
) -> np.ndarray:
    """Gradient of the path log probability in the flat parameter layout.

    Entries for other periods' rates (and, with per-period objectives, other
    periods' beta blocks) are zero, so per-period scores can simply be summed.
    """
    params.validate(model)
    ev = evaluator if evaluator is not None else ModelEvaluator(model, start.n)
    period = path.period
    beta = params.beta_for_period(period)
    n = start.n
    R = path.length
    P = params.n_periods
    K = len(params.rate_coefs)
    dim = params.dimension()
    score = np.zeros(dim)
    bsl = beta_block_slice(params, model, period)

    # objective block: multinomial-logit gradient accumulated along the replay
    replay = PathReplay(start, path)
    for r, g, (i, j) in replay.traverse():
        stats = ev.option_stats_matrix(i, g)
        mask = ev.option_mask(i)
        if i == j and not ev.allow_keep:
            return np.full(dim, float("-inf"))
        if i != j and not ev.allowed[i, j]:
            return np.full(dim, float("-inf"))
        f = stats @ beta
        fv = f[mask]
        m = fv.max()
        p = np.zeros(n)
        p[mask] = np.exp(fv - m)
        p /= p.sum()
        score[bsl] += stats[j] - p @ stats

    # rate block
    if model.constant_rates:
        score[period] = R / params.rates[period] - n * duration
        return score

    alpha_m = params.rates[period]
    # gradients of log pi terms
    grad_rate = np.zeros(1 + K)  # [alpha_m, coefs...]
    for r, g, (i, j) in replay.traverse():
        lam, rs = _lambda_matrix_grads(ev, g, params, period)
        tot = lam.sum()
        # alpha_m cancels between log lambda_i and log lambda
        grad_rate[1:] += rs[i] - (lam @ rs) / tot

    lam_tot = replay.lambda_totals(params, ev)
    if R == 0:
        # log kappa = -lambda(x0) * duration
        lam, rs = _lambda_matrix_grads(ev, start, params, period)
        grad_rate[0] += -duration * lam_tot[0] / alpha_m
        grad_rate[1:] += -duration * (lam @ rs)
    else:
        # normal-approximation count term
        lam_before = lam_tot[:-1]
        mu = float(np.sum(1.0 / lam_before))
        sigma2 = float(np.sum(1.0 / lam_before**2))
        # per-state gradients of the total rate
        g_states = np.zeros((R + 1, 1 + K))
        g = start.copy()
        idx = 0
        while True:
            lam, rs = _lambda_matrix_grads(ev, g, params, period)
            g_states[idx, 0] = lam_tot[idx] / alpha_m
            g_states[idx, 1:] = lam @ rs
            if idx == R:
                break
            i, j = path.steps[idx]
            if i != j:
                g.toggle(i, j)
            idx += 1
        dmu = -(g_states[:-1] / lam_before[:, None] ** 2).sum(axis=0)
        dsigma2 = -2.0 * (g_states[:-1] / lam_before[:, None] ** 3).sum(axis=0)
        dev = duration - mu
        grad_rate += (
            -g_states[-1] / lam_tot[-1]
            - dsigma2 / (2.0 * sigma2)
            + dev * dmu / sigma2
            + dev**2 * dsigma2 / (2.0 * sigma2**2)
        )

    score[period] = grad_rate[0]
    score[P:P + K] += grad_rate[1:]
    return score


def complete_data_information(
    path: SamplePath,
    start: Digraph,
    params: Parameters,
    model: ModelSpec,
    duration: float,
    evaluator: Optional[ModelEvaluator] = None,
) -> np.ndarray:
    """Observed information (negative Hessian) of the path log probability.

    The objective block is the exact logit Hessian (a sum of per-step option
    covariance matrices, hence positive semidefinite).  The rate block is
    R / alpha^2 for constant rates and central finite differences of the
    analytic score otherwise.  Cross blocks between the rate and objective
    parameters vanish identically.
    """
    params.validate(model)
    ev = evaluator if evaluator is not None else ModelEvaluator(model, start.n)
    period = path.period
    beta = params.beta_for_period(period)
    n = start.n
    dim = params.dimension()
    P = params.n_periods
    K = len(params.rate_coefs)
    info = np.zeros((dim, dim))
    bsl = beta_block_slice(params, model, period)

    replay = PathReplay(start, path)
    for r, g, (i, j) in replay.traverse():
        stats = ev.option_stats_matrix(i, g)
        mask = ev.option_mask(i)
        f = stats @ beta
        fv = f[mask]
        m = fv.max()
        p = np.zeros(n)
        p[mask] = np.exp(fv - m)
        p /= p.sum()
        mean = p @ stats
        cov = (stats.T * p) @ stats - np.outer(mean, mean)
        info[bsl, bsl] += cov

    if model.constant_rates:
        info[period, period] = path.length / params.rates[period] ** 2
        return info

    # finite differences of the analytic score over the rate block
    idxs = [period] + list(range(P, P + K))
    for k in idxs:
        h = 1e-5 * max(1.0, abs(params.flatten()[k]))
        up = params.flatten()
        up[k] += h
        dn = params.flatten()
        dn[k] -= h
        pu = Parameters.from_flat(up, P, model.n_effects, K, model.per_period_beta)
        pd = Parameters.from_flat(dn, P, model.n_effects, K, model.per_period_beta)
        su = complete_data_score(path, start, pu, model, duration, ev)
        sd = complete_data_score(path, start, pd, model, duration, ev)
        d = -(su - sd) / (2.0 * h)
        for row in idxs:
            info[row, k] = d[row]
    blk = np.ix_(idxs, idxs)
    info[blk] = (info[blk] + info[blk].T) / 2.0
    return info


def dump_path(path: SamplePath, fh) -> None:
    """Debug dump: one 'r i j' line per micro-step (1-based index)."""
    for r, (i, j) in enumerate(path.steps, start=1):
        fh.write(f"{r} {i} {j}\n")
