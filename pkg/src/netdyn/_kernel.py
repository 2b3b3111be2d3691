"""Compiled inner loops for choice probabilities along micro-step sequences.

Everything here mirrors the reference implementations in ``effects.py`` and
``model.py``; the test suite asserts exact agreement.  The kernels exist
because sample-path MCMC spends essentially all of its time evaluating the
multinomial choice probability of one actor at one network state, millions
of times per estimation run.

Effect kind codes (must match ``_KIND_CODES`` in model.py):
  0 outdegree            5 persistent_reciprocity
  1 reciprocity          6 covariate_alter        (covdata row: centered z)
  2 transitive_triplets  7 covariate_ego          (covdata row: centered z)
  3 three_cycles         8 covariate_similarity   (covdata row: raw z)
  4 indirect_ties        9 covariate_similarity_reciprocity (raw z)
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "utilities",
    "segment_choice_logprobs",
    "simulate_choice_steps",
]


@njit(cache=True)
def utilities(A, i, beta, kinds, covdata, f, w1, w2):
    """Fill f[j] with the objective value of option j for actor i.

    Option j != i toggles tie (i, j); option i keeps the network.  w1 and w2
    are length-n work buffers.
    """
    n = A.shape[0]
    for j in range(n):
        f[j] = 0.0
    r = A[i]
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        b = beta[k]
        if b == 0.0:
            continue
        if kind == 0:  # outdegree
            s0 = 0.0
            for j in range(n):
                s0 += r[j]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]))
        elif kind == 1:  # reciprocity
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * A[j, i]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * A[j, i])
        elif kind == 2:  # transitive triplets
            for j in range(n):
                w1[j] = 0.0
                w2[j] = 0.0
            for a in range(n):
                if r[a] != 0.0:
                    for j in range(n):
                        w1[j] += A[j, a]  # w1[j] = sum_b A[j,b] r[b]
                        w2[j] += A[a, j]  # w2[j] = sum_a r[a] A[a,j]
            s0 = 0.0
            for j in range(n):
                if r[j] != 0.0:
                    s0 += w1[j]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * (w1[j] + w2[j]))
        elif kind == 3:  # 3-cycles
            for j in range(n):
                acc = 0.0
                for a in range(n):
                    acc += A[j, a] * A[a, i]
                w1[j] = acc
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * w1[j]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * w1[j])
        elif kind == 4:  # indirect ties
            for j in range(n):
                w1[j] = 0.0
            for a in range(n):
                if r[a] != 0.0:
                    for j in range(n):
                        w1[j] += A[a, j]  # two-path counts
            s0 = 0.0
            for j in range(n):
                if j != i and r[j] == 0.0 and w1[j] > 0.0:
                    s0 += 1.0
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                    continue
                sig = 1.0 - 2.0 * r[j]
                d = 0.0
                if w1[j] > 0.0:
                    d -= sig  # alter j's own term switches weight between (1-r_j) and r_j
                for v in range(n):
                    if v != i and v != j and A[j, v] != 0.0:
                        old_ind = 1.0 if w1[v] > 0.0 else 0.0
                        new_ind = 1.0 if w1[v] + sig > 0.0 else 0.0
                        if new_ind != old_ind:
                            d += (1.0 - r[v]) * (new_ind - old_ind)
                f[j] += b * (s0 + d)
        elif kind == 5:  # persistent reciprocity (previous state = current state)
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * A[j, i]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 - r[j] * A[j, i])
        elif kind == 6:  # covariate alter
            z = covdata[k]
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * z[j]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * z[j])
        elif kind == 7:  # covariate ego
            z = covdata[k]
            s0 = 0.0
            for j in range(n):
                s0 += r[j]
            s0 *= z[i]
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * z[i])
        elif kind == 8:  # covariate similarity
            z = covdata[k]
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * (1.0 - abs(z[i] - z[j]))
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (s0 + (1.0 - 2.0 * r[j]) * (1.0 - abs(z[i] - z[j])))
        elif kind == 9:  # covariate similarity x reciprocity
            z = covdata[k]
            s0 = 0.0
            for j in range(n):
                s0 += r[j] * A[j, i] * (1.0 - abs(z[i] - z[j]))
            for j in range(n):
                if j == i:
                    f[j] += b * s0
                else:
                    f[j] += b * (
                        s0 + (1.0 - 2.0 * r[j]) * A[j, i] * (1.0 - abs(z[i] - z[j]))
                    )


@njit(cache=True)
def _masked_logsumexp(f, i, allowed_row, allow_keep):
    n = f.shape[0]
    m = -1.0e300
    for j in range(n):
        ok = (j == i and allow_keep) or (j != i and allowed_row[j] != 0)
        if ok and f[j] > m:
            m = f[j]
    if m == -1.0e300:
        return np.nan  # empty option set; callers guard against this
    s = 0.0
    for j in range(n):
        ok = (j == i and allow_keep) or (j != i and allowed_row[j] != 0)
        if ok:
            s += np.exp(f[j] - m)
    return m + np.log(s)


@njit(cache=True)
def segment_choice_logprobs(A, si, sj, beta, kinds, covdata, allowed, allow_keep, out):
    """Log choice probabilities of a micro-step sequence, mutating A in place.

    out[t] = log p_{i_t j_t} at the state reached after steps 0..t-1.
    Returns 0 on success, -1 if any step is impossible (structural zero or a
    keep step when keeping is disallowed); A is then left mid-sequence.
    """
    n = A.shape[0]
    f = np.empty(n)
    w1 = np.empty(n)
    w2 = np.empty(n)
    for t in range(si.shape[0]):
        i = si[t]
        j = sj[t]
        if i == j:
            if not allow_keep:
                return -1
        elif allowed[i, j] == 0:
            return -1
        utilities(A, i, beta, kinds, covdata, f, w1, w2)
        logz = _masked_logsumexp(f, i, allowed[i], allow_keep)
        out[t] = f[j] - logz
        if i != j:
            A[i, j] = 1.0 - A[i, j]
    return 0


@njit(cache=True)
def simulate_choice_steps(A, actors, unif, beta, kinds, covdata, allowed, allow_keep, chosen):
    """Drive the jump chain forward, mutating A.

    actors[t] is the actor receiving opportunity t; unif[t] the uniform draw
    selecting the option by inverse CDF over the permitted set.  chosen[t]
    records the selected option (== actor for a keep).
    """
    n = A.shape[0]
    f = np.empty(n)
    w1 = np.empty(n)
    w2 = np.empty(n)
    p = np.empty(n)
    for t in range(actors.shape[0]):
        i = actors[t]
        utilities(A, i, beta, kinds, covdata, f, w1, w2)
        m = -1.0e300
        for j in range(n):
            ok = (j == i and allow_keep) or (j != i and allowed[i, j] != 0)
            if ok and f[j] > m:
                m = f[j]
        z = 0.0
        for j in range(n):
            ok = (j == i and allow_keep) or (j != i and allowed[i, j] != 0)
            if ok:
                p[j] = np.exp(f[j] - m)
                z += p[j]
            else:
                p[j] = 0.0
        target = unif[t] * z
        acc = 0.0
        pick = -1
        for j in range(n):
            if p[j] > 0.0:
                acc += p[j]
                pick = j
                if acc >= target:
                    break
        chosen[t] = pick
        if pick != i:
            A[i, pick] = 1.0 - A[i, pick]
    return 0
