"""Model specification: rate functions, choice probabilities, intensity matrix entries.

An actor-oriented model couples a rate function (how often each actor gets an
opportunity to change one outgoing tie) with a multinomial-logit choice over
the permitted single-tie changes.  The chain moves one tie variable at a
time, so the intensity matrix is nonzero only between networks at Hamming
distance one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import _kernel
from .digraph import Digraph, PermittedSetPolicy
from .effects import (
    ActorCovariate,
    Effect,
    EffectSet,
    OBJECTIVE_KINDS,
    RateEffect,
    objective_statistic,
    option_statistics,
    rate_statistic,
)

__all__ = [
    "ModelSpec",
    "Parameters",
    "ModelEvaluator",
    "ModelError",
    "objective_function",
    "choice_probabilities",
    "rate",
    "total_rate",
    "actor_selection_probabilities",
    "intensity_entry",
]

_KIND_CODES = {kind: code for code, kind in enumerate(OBJECTIVE_KINDS)}


class ModelError(ValueError):
    """Inconsistent model specification or parameter block."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Effect set, covariates, and tie-change constraints for one analysis."""

    effects: EffectSet
    covariates: Mapping[str, ActorCovariate] = field(default_factory=dict)
    policy: PermittedSetPolicy = field(default_factory=PermittedSetPolicy)
    per_period_beta: bool = False

    @property
    def n_effects(self) -> int:
        return self.effects.n_objective

    @property
    def n_rate_effects(self) -> int:
        return self.effects.n_rate

    @property
    def constant_rates(self) -> bool:
        return self.effects.n_rate == 0


@dataclass
class Parameters:
    """Estimand: per-period base rates, rate-effect coefficients, objective weights.

    beta has shape (L,) when shared across periods, (P, L) otherwise.
    """

    rates: np.ndarray
    beta: np.ndarray
    rate_coefs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.rates = np.atleast_1d(np.asarray(self.rates, dtype=np.float64))
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.rate_coefs = np.atleast_1d(np.asarray(self.rate_coefs, dtype=np.float64))
        if np.any(self.rates <= 0.0):
            raise ModelError(f"rate parameters must be strictly positive, got {self.rates}")

    @property
    def n_periods(self) -> int:
        return len(self.rates)

    def beta_for_period(self, period: int) -> np.ndarray:
        if self.beta.ndim == 2:
            return self.beta[period]
        return self.beta

    def validate(self, model: ModelSpec) -> None:
        L = model.n_effects
        if self.beta.ndim == 2:
            if not model.per_period_beta:
                raise ModelError("per-period beta supplied but model shares beta across periods")
            if self.beta.shape != (self.n_periods, L):
                raise ModelError(
                    f"beta shape {self.beta.shape} != (periods, effects) = ({self.n_periods}, {L})"
                )
        elif self.beta.shape != (L,):
            raise ModelError(f"beta length {self.beta.shape} != number of effects {L}")
        if len(self.rate_coefs) != model.n_rate_effects:
            raise ModelError(
                f"{len(self.rate_coefs)} rate coefficients for {model.n_rate_effects} rate effects"
            )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.rates, self.rate_coefs, self.beta.ravel()])

    @classmethod
    def from_flat(
        cls, vec: np.ndarray, n_periods: int, n_effects: int, n_rate_effects: int = 0,
        per_period_beta: bool = False,
    ) -> "Parameters":
        vec = np.asarray(vec, dtype=np.float64)
        p = n_periods
        k = n_rate_effects
        nb = p * n_effects if per_period_beta else n_effects
        if len(vec) != p + k + nb:
            raise ModelError(f"flat vector length {len(vec)}, expected {p + k + nb}")
        beta = vec[p + k:]
        if per_period_beta:
            beta = beta.reshape(p, n_effects)
        return cls(rates=vec[:p].copy(), beta=beta.copy(), rate_coefs=vec[p:p + k].copy())

    def copy(self) -> "Parameters":
        return Parameters(self.rates.copy(), self.beta.copy(), self.rate_coefs.copy())

    def dimension(self) -> int:
        return len(self.flatten())


def parameter_labels(model: ModelSpec, n_periods: int) -> list[str]:
    labels = [f"Rate period {m + 1}" for m in range(n_periods)]
    labels += [e.label() for e in model.effects.rate]
    obj = [e.label() for e in model.effects.objective]
    if model.per_period_beta:
        for m in range(n_periods):
            labels += [f"{lab} (period {m + 1})" for lab in obj]
    else:
        labels += obj
    return labels


class ModelEvaluator:
    """Packs a model for repeated evaluation on n actors.

    Holds the kernel-ready encodings (effect codes, covariate rows, permitted
    mask) plus numpy reference paths used for gradients and cross-checks.
    """

    def __init__(self, model: ModelSpec, n: int) -> None:
        model.effects.validate_covariates(model.covariates, n)
        self.model = model
        self.n = n
        self.policy = model.policy
        self.allow_keep = model.policy.allow_keep
        self.allowed = model.policy.allowed(n)
        self._allowed_u8 = self.allowed.astype(np.uint8)
        if not self.allow_keep and not self.allowed.any(axis=1).all():
            raise ModelError("some actor has no permitted option (all toggles forbidden, keep disallowed)")

        L = model.n_effects
        self.kinds = np.array(
            [_KIND_CODES[e.kind] for e in model.effects.objective], dtype=np.int64
        )
        self.covdata = np.zeros((max(L, 1), n))
        for k, e in enumerate(model.effects.objective):
            if e.covariate is None:
                continue
            cov = model.covariates[e.covariate]
            if e.kind in ("covariate_alter", "covariate_ego"):
                self.covdata[k] = cov.centered
            else:
                self.covdata[k] = cov.raw

    # ---- kernel-backed fast paths -------------------------------------

    def utilities(self, i: int, A: np.ndarray, beta: np.ndarray) -> np.ndarray:
        f = np.empty(self.n)
        w1 = np.empty(self.n)
        w2 = np.empty(self.n)
        _kernel.utilities(A, i, np.asarray(beta, dtype=np.float64), self.kinds,
                          self.covdata, f, w1, w2)
        return f

    def segment_choice_logprobs(
        self, A: np.ndarray, si: np.ndarray, sj: np.ndarray, beta: np.ndarray
    ) -> tuple[bool, np.ndarray]:
        """Evaluate a step sequence starting from state A (mutated to the end state)."""
        out = np.empty(len(si))
        ok = _kernel.segment_choice_logprobs(
            A, si, sj, np.asarray(beta, dtype=np.float64), self.kinds, self.covdata,
            self._allowed_u8, self.allow_keep, out,
        )
        return ok == 0, out

    def simulate_choice_steps(
        self, A: np.ndarray, actors: np.ndarray, unif: np.ndarray, beta: np.ndarray
    ) -> np.ndarray:
        chosen = np.empty(len(actors), dtype=np.int64)
        _kernel.simulate_choice_steps(
            A, actors, unif, np.asarray(beta, dtype=np.float64), self.kinds, self.covdata,
            self._allowed_u8, self.allow_keep, chosen,
        )
        return chosen

    # ---- numpy reference paths ----------------------------------------

    def option_stats_matrix(self, i: int, g: Digraph) -> np.ndarray:
        """(n, L) matrix of per-option effect statistics for actor i."""
        cols = [
            option_statistics(e, i, g, self.model.covariates)
            for e in self.model.effects.objective
        ]
        return np.column_stack(cols) if cols else np.zeros((self.n, 0))

    def option_mask(self, i: int) -> np.ndarray:
        """Boolean mask of valid options for actor i (True = in the permitted set)."""
        mask = self.allowed[i].copy()
        mask[i] = self.allow_keep
        return mask

    def choice_logprobs(self, i: int, g: Digraph, beta: np.ndarray) -> np.ndarray:
        """Reference log choice probabilities; -inf outside the permitted set."""
        stats = self.option_stats_matrix(i, g)
        f = stats @ np.asarray(beta, dtype=np.float64)
        mask = self.option_mask(i)
        if not mask.any():
            raise ModelError(f"actor {i} has an empty permitted set")
        out = np.full(self.n, -np.inf)
        fv = f[mask]
        m = fv.max()
        out[mask] = f[mask] - (m + np.log(np.exp(fv - m).sum()))
        return out

    def choice_probs(self, i: int, g: Digraph, beta: np.ndarray) -> np.ndarray:
        lp = self.choice_logprobs(i, g, beta)
        p = np.exp(lp)
        return p / p.sum()

    # ---- rate function -------------------------------------------------

    def rate_stats_matrix(self, g: Digraph) -> np.ndarray:
        """(n, K) matrix of per-actor rate statistics."""
        cols = [rate_statistic(e, g, self.model.covariates) for e in self.model.effects.rate]
        return np.column_stack(cols) if cols else np.zeros((self.n, 0))

    def lambdas(self, g: Digraph, params: Parameters, period: int) -> np.ndarray:
        """Per-actor opportunity rates for one period."""
        if period < 0 or period >= params.n_periods:
            raise ModelError(f"period {period} out of range for {params.n_periods} periods")
        base = params.rates[period]
        if self.model.constant_rates:
            return np.full(self.n, base)
        rs = self.rate_stats_matrix(g)
        return base * np.exp(rs @ params.rate_coefs)


# ---------------------------------------------------------------------------
# free-standing operations on explicit ingredients


def objective_function(
    actor: int,
    previous: Optional[Digraph],
    candidate: Digraph,
    beta: np.ndarray,
    effects: Sequence[Effect],
    covariates: Mapping[str, ActorCovariate],
) -> float:
    """Linear objective: sum of beta_k times each effect statistic."""
    beta = np.asarray(beta, dtype=np.float64)
    if len(beta) != len(effects):
        raise ModelError(f"beta length {len(beta)} != number of effects {len(effects)}")
    return float(
        sum(
            b * objective_statistic(e, actor, previous, candidate, covariates)
            for b, e in zip(beta, effects)
        )
    )


def choice_probabilities(
    actor: int,
    current: Digraph,
    beta: np.ndarray,
    effects: Sequence[Effect],
    covariates: Mapping[str, ActorCovariate],
    policy: PermittedSetPolicy,
) -> np.ndarray:
    """Multinomial-logit probabilities over actor options at the current network.

    Entry j is the probability of toggling tie (actor, j); entry ``actor`` is
    the probability of keeping the network (zero when keeping is disallowed).
    Options excluded by structural zeros get probability zero.
    """
    model = ModelSpec(EffectSet(list(effects)), dict(covariates), policy)
    ev = ModelEvaluator(model, current.n)
    return ev.choice_probs(actor, current, np.asarray(beta, dtype=np.float64))


def rate(
    actor: int,
    current: Digraph,
    params: Parameters,
    model: ModelSpec,
    period: int,
) -> float:
    """Opportunity rate of one actor: per-period base times exponential link."""
    ev = ModelEvaluator(model, current.n)
    return float(ev.lambdas(current, params, period)[actor])


def total_rate(current: Digraph, params: Parameters, model: ModelSpec, period: int) -> float:
    ev = ModelEvaluator(model, current.n)
    return float(ev.lambdas(current, params, period).sum())


def actor_selection_probabilities(
    current: Digraph, params: Parameters, model: ModelSpec, period: int
) -> np.ndarray:
    """Probability that each actor is the one receiving the next opportunity."""
    ev = ModelEvaluator(model, current.n)
    lam = ev.lambdas(current, params, period)
    tot = lam.sum()
    if tot <= 0.0:
        raise ModelError("total rate is zero")
    return lam / tot


def intensity_entry(
    source: Digraph,
    target: Digraph,
    params: Parameters,
    model: ModelSpec,
    period: int = 0,
) -> float:
    """Intensity-matrix entry q(source, target); zero unless one tie differs."""
    if source == target:
        raise ModelError("intensity entries are defined for distinct states only")
    diffs = source.differing_dyads(target)
    if len(diffs) != 1:
        return 0.0
    i, j = diffs[0]
    ev = ModelEvaluator(model, source.n)
    if not ev.allowed[i, j]:
        return 0.0
    lam_i = ev.lambdas(source, params, period)[i]
    p = ev.choice_probs(i, source, params.beta_for_period(period))
    return float(lam_i * p[j])
