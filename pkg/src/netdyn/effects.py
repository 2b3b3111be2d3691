"""Effect statistics for the objective and rate functions.

Objective effects score a candidate network x from the point of view of the
acting actor i, possibly relative to the network x0 the actor is moving away
from.  Each effect has

  * a reference implementation (``objective_statistic``) that evaluates the
    counting formula directly on full matrices, and
  * a vectorized form (``option_statistics``) that returns the statistic for
    every option an actor has (keep, or toggle any one outgoing tie) in one
    pass.

The two must agree exactly; the test suite enforces it on random digraphs.

Covariate-based effects use actor covariates centered at their mean for the
ego and alter forms, and the raw similarity 1 - |z_i - z_j| for the
similarity forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .digraph import Digraph

__all__ = [
    "ActorCovariate",
    "Effect",
    "RateEffect",
    "EffectSet",
    "OBJECTIVE_KINDS",
    "RATE_KINDS",
    "EFFECT_LABELS",
    "objective_statistic",
    "option_statistics",
    "total_statistic",
    "rate_statistic",
]


@dataclass(frozen=True)
class ActorCovariate:
    """A numeric attribute per actor. The mean is recomputed, never cached."""

    name: str
    values: tuple

    def __init__(self, name: str, values) -> None:
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "values", tuple(float(v) for v in np.asarray(values).ravel()))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def centered(self) -> np.ndarray:
        v = np.asarray(self.values)
        return v - v.mean()

    @property
    def raw(self) -> np.ndarray:
        return np.asarray(self.values)


OBJECTIVE_KINDS = (
    "outdegree",
    "reciprocity",
    "transitive_triplets",
    "three_cycles",
    "indirect_ties",
    "persistent_reciprocity",
    "covariate_alter",
    "covariate_ego",
    "covariate_similarity",
    "covariate_similarity_reciprocity",
)

#: kinds whose statistic depends on a covariate
_COVARIATE_KINDS = frozenset(k for k in OBJECTIVE_KINDS if k.startswith("covariate"))

#: kinds whose statistic depends on the previous state x0
_PREVIOUS_STATE_KINDS = frozenset({"persistent_reciprocity"})

RATE_KINDS = ("outdegree", "indegree", "covariate")

EFFECT_LABELS = {
    "outdegree": "Outdegree",
    "reciprocity": "Reciprocated ties",
    "transitive_triplets": "Transitive triplets",
    "three_cycles": "3-cycles",
    "indirect_ties": "Indirect ties",
    "persistent_reciprocity": "Persistent reciprocity",
    "covariate_alter": "{cov} alter",
    "covariate_ego": "{cov} ego",
    "covariate_similarity": "{cov} similarity",
    "covariate_similarity_reciprocity": "{cov} similarity x reciprocity",
}


class EffectError(ValueError):
    """Unknown effect kind or missing covariate binding."""


@dataclass(frozen=True)
class Effect:
    """Descriptor of one objective-function term."""

    kind: str
    covariate: Optional[str] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise EffectError(f"unknown objective effect kind {self.kind!r}")
        if self.kind in _COVARIATE_KINDS and self.covariate is None:
            raise EffectError(f"effect {self.kind!r} needs a covariate binding")

    @property
    def uses_previous_state(self) -> bool:
        return self.kind in _PREVIOUS_STATE_KINDS

    def label(self) -> str:
        return EFFECT_LABELS[self.kind].format(cov=self.covariate)


@dataclass(frozen=True)
class RateEffect:
    """Descriptor of one rate-function statistic (exponential link)."""

    kind: str
    covariate: Optional[str] = None

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise EffectError(f"unknown rate effect kind {self.kind!r}")
        if self.kind == "covariate" and self.covariate is None:
            raise EffectError("rate effect 'covariate' needs a covariate binding")

    def label(self) -> str:
        return f"Rate: {self.covariate}" if self.kind == "covariate" else f"Rate: {self.kind}"


@dataclass(frozen=True)
class EffectSet:
    """Ordered objective effects (one per beta coordinate) and rate effects."""

    objective: tuple
    rate: tuple = ()

    def __init__(self, objective: Sequence[Effect], rate: Sequence[RateEffect] = ()) -> None:
        object.__setattr__(self, "objective", tuple(objective))
        object.__setattr__(self, "rate", tuple(rate))
        for e in self.objective:
            if not isinstance(e, Effect):
                raise EffectError(f"objective entries must be Effect, got {type(e)!r}")
        for e in self.rate:
            if not isinstance(e, RateEffect):
                raise EffectError(f"rate entries must be RateEffect, got {type(e)!r}")

    @property
    def n_objective(self) -> int:
        return len(self.objective)

    @property
    def n_rate(self) -> int:
        return len(self.rate)

    def covariate_names(self) -> set:
        names = {e.covariate for e in self.objective if e.covariate is not None}
        names |= {e.covariate for e in self.rate if e.covariate is not None}
        return names

    def validate_covariates(self, covariates: Mapping[str, ActorCovariate], n: int) -> None:
        for name in self.covariate_names():
            if name not in covariates:
                raise EffectError(f"effect references covariate {name!r} which is not defined")
            if covariates[name].n != n:
                raise EffectError(
                    f"covariate {name!r} has {covariates[name].n} values for {n} actors"
                )


def _covariate(effect, covariates) -> ActorCovariate:
    try:
        return covariates[effect.covariate]
    except KeyError:
        raise EffectError(f"covariate {effect.covariate!r} missing") from None


def objective_statistic(
    effect: Effect,
    i: int,
    previous: Optional[Digraph],
    candidate: Digraph,
    covariates: Mapping[str, ActorCovariate],
) -> float:
    """Evaluate one effect's statistic for actor i on the candidate network.

    ``previous`` is the network the actor is moving away from; effects that
    depend only on the candidate ignore it.
    """
    x = candidate.a
    n = candidate.n
    r = x[i]
    kind = effect.kind
    if kind == "outdegree":
        return float(r.sum())
    if kind == "reciprocity":
        return float(r @ x[:, i])
    if kind == "transitive_triplets":
        return float(r @ x @ r)
    if kind == "three_cycles":
        return float(r @ x @ x[:, i])
    if kind == "indirect_ties":
        two_paths = r @ x
        reachable = two_paths > 0
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        return float(np.sum((1.0 - r) * reachable * mask))
    if kind == "persistent_reciprocity":
        if previous is None:
            raise EffectError("persistent_reciprocity needs the previous network")
        x0 = previous.a
        return float(np.sum(x0[i] * x0[:, i] * r * x[:, i]))
    z = _covariate(effect, covariates)
    if kind == "covariate_alter":
        return float(r @ z.centered)
    if kind == "covariate_ego":
        return float(r.sum() * z.centered[i])
    if kind == "covariate_similarity":
        sim = 1.0 - np.abs(z.raw[i] - z.raw)
        return float(r @ sim)
    if kind == "covariate_similarity_reciprocity":
        sim = 1.0 - np.abs(z.raw[i] - z.raw)
        return float((r * x[:, i]) @ sim)
    raise EffectError(f"unknown effect kind {kind!r}")


def option_statistics(
    effect: Effect,
    i: int,
    current: Digraph,
    covariates: Mapping[str, ActorCovariate],
) -> np.ndarray:
    """Statistic of every option of actor i at the current network.

    Entry j != i is the statistic of the network with tie (i, j) toggled;
    entry i is the statistic of keeping the network as is.  The previous
    state entering path-dependent effects is the current network itself.
    """
    x = current.a
    n = current.n
    r = x[i]
    c = x[:, i]
    sig = 1.0 - 2.0 * r  # +1 when the toggle adds the tie, -1 when it removes it
    kind = effect.kind

    if kind == "outdegree":
        s0 = r.sum()
        out = s0 + sig
    elif kind == "reciprocity":
        s0 = r @ c
        out = s0 + sig * c
    elif kind == "transitive_triplets":
        t_out = x @ r
        t_in = r @ x
        s0 = r @ t_out
        out = s0 + sig * (t_out + t_in)
    elif kind == "three_cycles":
        u = x @ c
        s0 = r @ u
        out = s0 + sig * u
    elif kind == "indirect_ties":
        two = r @ x
        keep_mask = np.ones(n)
        keep_mask[i] = 0.0
        s0 = np.sum((1.0 - r) * (two > 0) * keep_mask)
        two_opt = two[None, :] + sig[:, None] * x  # row j: two-path counts after toggling (i, j)
        coef = np.tile(1.0 - r, (n, 1))
        np.fill_diagonal(coef, r)  # after toggling (i, j) the weight at alter j is x_ij
        coef[:, i] = 0.0
        out = np.sum(coef * (two_opt > 0), axis=1)
    elif kind == "persistent_reciprocity":
        mutual = r * c
        s0 = mutual.sum()
        out = s0 - mutual  # removing a mutual tie drops it; adding cannot create one
    else:
        z = _covariate(effect, covariates)
        if kind == "covariate_alter":
            zc = z.centered
            s0 = r @ zc
            out = s0 + sig * zc
        elif kind == "covariate_ego":
            s0 = r.sum() * z.centered[i]
            out = s0 + sig * z.centered[i]
        elif kind == "covariate_similarity":
            sim = 1.0 - np.abs(z.raw[i] - z.raw)
            s0 = r @ sim
            out = s0 + sig * sim
        elif kind == "covariate_similarity_reciprocity":
            sim = 1.0 - np.abs(z.raw[i] - z.raw)
            s0 = (r * c) @ sim
            out = s0 + sig * c * sim
        else:
            raise EffectError(f"unknown effect kind {kind!r}")
    out = np.asarray(out, dtype=np.float64)
    out[i] = s0
    return out


def total_statistic(
    effect: Effect,
    previous: Optional[Digraph],
    candidate: Digraph,
    covariates: Mapping[str, ActorCovariate],
) -> float:
    """Sum of the effect statistic over all actors, computed in one pass.

    Equals ``sum(objective_statistic(effect, i, ...) for i in range(n))``;
    used for method-of-moments target statistics.
    """
    x = candidate.a
    kind = effect.kind
    if kind == "outdegree":
        return float(x.sum())
    if kind == "reciprocity":
        return float(np.sum(x * x.T))
    if kind == "transitive_triplets":
        return float(np.sum((x @ x) * x))
    if kind == "three_cycles":
        return float(np.sum((x @ x) * x.T))
    if kind == "indirect_ties":
        two = (x @ x) > 0
        off = ~np.eye(candidate.n, dtype=bool)
        return float(np.sum((1.0 - x) * two * off))
    if kind == "persistent_reciprocity":
        if previous is None:
            raise EffectError("persistent_reciprocity needs the previous network")
        x0 = previous.a
        return float(np.sum(x0 * x0.T * x * x.T))
    z = _covariate(effect, covariates)
    if kind == "covariate_alter":
        return float(x.sum(axis=0) @ z.centered)
    if kind == "covariate_ego":
        return float(x.sum(axis=1) @ z.centered)
    sim = 1.0 - np.abs(z.raw[:, None] - z.raw[None, :])
    if kind == "covariate_similarity":
        return float(np.sum(x * sim))
    if kind == "covariate_similarity_reciprocity":
        return float(np.sum(x * x.T * sim))
    raise EffectError(f"unknown effect kind {kind!r}")


def rate_statistic(
    effect: RateEffect,
    g: Digraph,
    covariates: Mapping[str, ActorCovariate],
) -> np.ndarray:
    """Per-actor rate statistic r_ik(x), as a length-n vector."""
    if effect.kind == "outdegree":
        return g.a.sum(axis=1)
    if effect.kind == "indegree":
        return g.a.sum(axis=0)
    if effect.kind == "covariate":
        return _covariate(effect, covariates).centered.copy()
    raise EffectError(f"unknown rate effect kind {effect.kind!r}")
