"""Exact likelihood for tiny networks by full state-space enumeration.

The chain on digraphs has 2^F states, where F is the number of free
(off-diagonal, not structurally forbidden) tie variables, so exact transition
probabilities are computable for n <= 4 by exponentiating the intensity
matrix.  The exponential is evaluated by uniformization: with q bounding the
exit rates and B = I + Q/q, the transition matrix is a Poisson(q t) mixture
of powers of the stochastic matrix B, truncated once the Poisson tail drops
below a fixed tolerance, which bounds the truncation error in total
variation by that tolerance.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import sparse

from .digraph import Digraph
from .model import ModelEvaluator, ModelSpec, Parameters
from .panel import PanelData

__all__ = ["exact_log_likelihood", "enumerate_states", "build_intensity_matrix",
           "transition_row"]

MAX_ACTORS = 4
UNIFORMIZATION_TOL = 1e-12


def _free_dyads(model: ModelSpec, n: int) -> list:
    ev = ModelEvaluator(model, n)
    return [tuple(map(int, d)) for d in np.argwhere(ev.allowed)]


def enumerate_states(model: ModelSpec, n: int) -> tuple[list, dict]:
    """All reachable adjacency matrices and an index keyed by raw bytes."""
    if n > MAX_ACTORS:
        raise ValueError(
            f"exact enumeration is limited to n <= {MAX_ACTORS} actors ({n} requested); "
            "the state space doubles with every free tie variable"
        )
    dyads = _free_dyads(model, n)
    states = []
    index = {}
    for code in range(1 << len(dyads)):
        a = np.zeros((n, n))
        for b, (i, j) in enumerate(dyads):
            if code >> b & 1:
                a[i, j] = 1.0
        states.append(a)
        index[a.tobytes()] = code
    return states, index


def build_intensity_matrix(
    model: ModelSpec, params: Parameters, n: int, period: int = 0
) -> tuple[sparse.csr_matrix, list, dict]:
    """Sparse intensity matrix over the enumerated state space."""
    if model.n_rate_effects > 0:
        raise ValueError("exact likelihood supports constant-per-period rates only")
    params.validate(model)
    dyads = _free_dyads(model, n)
    states, index = enumerate_states(model, n)
    ev = ModelEvaluator(model, n)
    beta = params.beta_for_period(period)
    alpha = params.rates[period]
    rows, cols, vals = [], [], []
    for code, a in enumerate(states):
        g = Digraph(a)
        diag = 0.0
        by_actor: dict = {}
        for b, (i, j) in enumerate(dyads):
            by_actor.setdefault(i, []).append((b, j))
        for i, targets in by_actor.items():
            p = ev.choice_probs(i, g, beta)
            for b, j in targets:
                q = alpha * p[j]
                if q > 0.0:
                    rows.append(code)
                    cols.append(code ^ (1 << b))
                    vals.append(q)
                    diag += q
        rows.append(code)
        cols.append(code)
        vals.append(-diag)
    S = len(states)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(S, S)), states, index


def transition_row(
    q_matrix: sparse.csr_matrix, start_index: int, t: float,
    tol: float = UNIFORMIZATION_TOL,
) -> np.ndarray:
    """One row of exp(t Q) by uniformization, truncation error below tol."""
    S = q_matrix.shape[0]
    qmax = float(-q_matrix.diagonal().min())
    if qmax == 0.0:
        out = np.zeros(S)
        out[start_index] = 1.0
        return out
    B = sparse.eye(S, format="csr") + q_matrix / qmax
    mean = qmax * t
    v = np.zeros(S)
    v[start_index] = 1.0
    out = np.zeros(S)
    log_pmf = -mean  # log Poisson pmf at k = 0
    cumulative = 0.0
    k = 0
    while cumulative < 1.0 - tol:
        pmf = math.exp(log_pmf)
        out += pmf * v
        cumulative += pmf
        k += 1
        if k > mean + 40.0 * math.sqrt(mean + 1.0) + 100.0:
            raise RuntimeError("uniformization failed to converge")
        log_pmf += math.log(mean) - math.log(k)
        v = v @ B
    return out


def exact_log_likelihood(panel: PanelData, model: ModelSpec, params: Parameters) -> float:
    """Sum over periods of log P[wave m+1 | wave m] from the full chain."""
    n = panel.n
    params.validate(model)
    if params.n_periods != panel.n_periods:
        raise ValueError(
            f"{params.n_periods} rate parameters for {panel.n_periods} periods"
        )
    total = 0.0
    states = index = None
    for m in range(panel.n_periods):
        q_matrix, states, index = build_intensity_matrix(model, params, n, period=m)
        start = index[panel.waves[m].a.tobytes()]
        end = index[panel.waves[m + 1].a.tobytes()]
        row = transition_row(q_matrix, start, float(panel.durations[m]))
        p = row[end]
        if p <= 0.0:
            return float("-inf")
        total += math.log(p)
    return total
