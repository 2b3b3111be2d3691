"""Metropolis-Hastings sampling of the path between two fixed waves.

The proposal mixes five move types: paired insertion/deletion of a repeated
tie toggle, single insertion/deletion of a "keep" micro-step, and permutation
of a bounded segment.  Paired moves obey two restrictions that make the
insertion and deletion of a pair unique inverses of each other: the two
positions must have no occurrence of the same dyad between them, and at
least one other element in between.  Paired moves also permute the spanned
segment, which costs nothing extra (the whole span is re-evaluated anyway)
and improves mixing.

Kind probabilities are renormalized over the kinds that currently have at
least one eligible application, in both the forward and reverse direction,
so the returned log proposal ratio is exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .digraph import Digraph
from .model import ModelEvaluator, ModelSpec, Parameters
from .paths import SamplePath, path_log_probability, validate_parity

__all__ = [
    "MOVE_KINDS",
    "ProposalMix",
    "Proposal",
    "ChainState",
    "propose",
    "mh_step",
    "run_chain",
    "score_autocorrelation",
    "SamplerError",
]

logger = logging.getLogger(__name__)

MOVE_KINDS = (
    "paired_insertion",
    "paired_deletion",
    "single_insertion",
    "single_deletion",
    "permutation",
)


class SamplerError(RuntimeError):
    """Chain cannot move (or an internal cache failed revalidation)."""


@dataclass(frozen=True)
class ProposalMix:
    """Move-kind weights (summing to 1) and the permutation span bound."""

    paired_insertion: float = 0.3
    paired_deletion: float = 0.3
    single_insertion: float = 0.1
    single_deletion: float = 0.1
    permutation: float = 0.2
    max_permutation_span: int = 10

    def __post_init__(self):
        w = self.weights()
        if any(v < 0.0 for v in w.values()):
            raise ValueError("proposal weights must be nonnegative")
        if abs(sum(w.values()) - 1.0) > 1e-12:
            raise ValueError(f"proposal weights must sum to 1, got {sum(w.values())!r}")
        if self.max_permutation_span < 2:
            raise ValueError("max_permutation_span must be at least 2")

    def weights(self) -> dict:
        return {
            "paired_insertion": self.paired_insertion,
            "paired_deletion": self.paired_deletion,
            "single_insertion": self.single_insertion,
            "single_deletion": self.single_deletion,
            "permutation": self.permutation,
        }

    def without_keep_moves(self) -> "ProposalMix":
        """Renormalized mix with the keep-step moves removed (keep disallowed)."""
        rest = self.paired_insertion + self.paired_deletion + self.permutation
        if rest <= 0.0:
            raise ValueError("cannot drop keep moves from a mix with no paired/permutation weight")
        return ProposalMix(
            paired_insertion=self.paired_insertion / rest,
            paired_deletion=self.paired_deletion / rest,
            single_insertion=0.0,
            single_deletion=0.0,
            permutation=self.permutation / rest,
            max_permutation_span=self.max_permutation_span,
        )


class _PathStats:
    """Counting structures for proposal eligibility on one step sequence."""

    __slots__ = ("R", "diag", "positions", "del_pairs", "pi_counts", "n_out",
                 "pi_eligible_occ", "n_eligible_dyads")

    def __init__(self, steps: list, n_allowed_dyads: int) -> None:
        R = len(steps)
        self.R = R
        positions: dict = {}
        diag: list = []
        for idx, (i, j) in enumerate(steps):
            if i == j:
                diag.append(idx)
            else:
                positions.setdefault((i, j), []).append(idx)
        self.diag = diag
        self.positions = positions
        # deletion pairs: consecutive occurrences with at least one element between
        del_pairs = []
        for pos in positions.values():
            for t in range(len(pos) - 1):
                if pos[t + 1] - pos[t] >= 2:
                    del_pairs.append((pos[t], pos[t + 1]))
        self.del_pairs = del_pairs
        # insertion slot-pair counts per occurring dyad (slots split into regions
        # by the dyad's occurrences; any two distinct slots in one region work)
        pi_counts = {}
        for d, pos in positions.items():
            c = 0
            prev = -1
            for p in pos + [R]:
                g = p - prev
                c += g * (g - 1) // 2
                prev = p
            pi_counts[d] = c
        self.pi_counts = pi_counts
        self.n_out = n_allowed_dyads - len(positions)
        self.pi_eligible_occ = [d for d, c in pi_counts.items() if c >= 1]
        self.n_eligible_dyads = (self.n_out if R >= 1 else 0) + len(self.pi_eligible_occ)

    def pi_pair_count(self, dyad) -> int:
        if dyad in self.pi_counts:
            return self.pi_counts[dyad]
        return self.R * (self.R + 1) // 2  # comb(R+1, 2) for a dyad absent from the path

    def n_deletion_pairs(self) -> int:
        return len(self.del_pairs)

    def n_permutation_pairs(self, max_span: int) -> int:
        return sum(self.R - ell + 1 for ell in range(2, min(max_span, self.R) + 1))

    def eligible_kinds(self, mix: ProposalMix) -> dict:
        w = mix.weights()
        out = {}
        if w["paired_insertion"] > 0.0 and self.n_eligible_dyads >= 1:
            out["paired_insertion"] = w["paired_insertion"]
        if w["paired_deletion"] > 0.0 and self.del_pairs:
            out["paired_deletion"] = w["paired_deletion"]
        if w["single_insertion"] > 0.0:
            out["single_insertion"] = w["single_insertion"]
        if w["single_deletion"] > 0.0 and self.diag:
            out["single_deletion"] = w["single_deletion"]
        if w["permutation"] > 0.0 and self.R >= 2:
            out["permutation"] = w["permutation"]
        return out


@dataclass
class Proposal:
    """A candidate splice new_steps = steps[:at] + segment + steps[at+replaced:]."""

    kind: str
    at: int
    replaced: int
    segment: list
    log_ratio: float  # log u(v | v~) - log u(v~ | v)
    new_steps: list
    detail: dict
    cand_stats: object = None


def _log_kind_prob(eligible: dict, kind: str) -> float:
    return math.log(eligible[kind]) - math.log(sum(eligible.values()))


def _pick_weighted(rng, weights) -> int:
    """Index into weights drawn proportionally (faster than Generator.choice)."""
    total = 0.0
    for w in weights:
        total += w
    u = rng.random() * total
    acc = 0.0
    for idx, w in enumerate(weights):
        acc += w
        if u < acc:
            return idx
    return len(weights) - 1


def _sample_slot_pair(rng, positions: Optional[list], R: int) -> tuple[int, int]:
    """Uniform eligible slot pair for a dyad with the given occurrence positions."""
    bounds = [-1] + (positions or []) + [R]
    weights = []
    for t in range(len(bounds) - 1):
        g = bounds[t + 1] - bounds[t]
        weights.append(g * (g - 1) // 2)
    total = sum(weights)
    pick = int(rng.integers(total))
    acc = 0
    for t, w in enumerate(weights):
        acc += w
        if pick < acc:
            lo = bounds[t] + 1
            g = bounds[t + 1] - bounds[t]
            a = int(rng.integers(g))
            b = int(rng.integers(g - 1))
            if b >= a:
                b += 1
            return lo + min(a, b), lo + max(a, b)
    raise AssertionError("unreachable: slot-pair weights empty")


def propose(state: "ChainState", mix: ProposalMix) -> Proposal:
    """Draw one candidate path and its exact log proposal ratio."""
    stats = state.stats
    steps = state.path.steps
    R = stats.R
    rng = state.rng
    n = state.start.n

    eligible = stats.eligible_kinds(mix)
    if not eligible:
        raise SamplerError(
            "no eligible proposal of any kind; an empty path with zero insertion "
            "weights cannot move"
        )
    kinds = list(eligible)
    kind = kinds[_pick_weighted(rng, [eligible[k] for k in kinds])]
    fwd = _log_kind_prob(eligible, kind)

    if kind == "paired_insertion":
        u = int(rng.integers(stats.n_eligible_dyads))
        if u < len(stats.pi_eligible_occ):
            dyad = stats.pi_eligible_occ[u]
        else:
            while True:
                idx = int(rng.integers(state.n_allowed_dyads))
                dyad = state.allowed_dyads[idx]
                if dyad not in stats.positions:
                    break
        s1, s2 = _sample_slot_pair(rng, stats.positions.get(dyad), R)
        middle = steps[s1:s2]
        perm = [middle[k] for k in rng.permutation(len(middle))]
        segment = [dyad] + perm + [dyad]
        fwd += -math.log(stats.n_eligible_dyads) - math.log(stats.pi_pair_count(dyad))
        new_steps = steps[:s1] + segment + steps[s2:]
        cand = _PathStats(new_steps, state.n_allowed_dyads)
        rev = _log_kind_prob(cand.eligible_kinds(mix), "paired_deletion")
        rev += -math.log(cand.n_deletion_pairs())
        return Proposal(kind, s1, s2 - s1, segment, rev - fwd, new_steps,
                        {"dyad": dyad, "slots": (s1, s2)}, cand)

    if kind == "paired_deletion":
        r1, r2 = stats.del_pairs[int(rng.integers(len(stats.del_pairs)))]
        dyad = steps[r1]
        middle = steps[r1 + 1:r2]
        segment = [middle[k] for k in rng.permutation(len(middle))]
        fwd += -math.log(len(stats.del_pairs))
        new_steps = steps[:r1] + segment + steps[r2 + 1:]
        cand = _PathStats(new_steps, state.n_allowed_dyads)
        rev = _log_kind_prob(cand.eligible_kinds(mix), "paired_insertion")
        rev += -math.log(cand.n_eligible_dyads) - math.log(cand.pi_pair_count(dyad))
        return Proposal(kind, r1, r2 - r1 + 1, segment, rev - fwd, new_steps,
                        {"dyad": dyad, "pair": (r1, r2)}, cand)

    if kind == "single_insertion":
        i = int(rng.integers(n))
        s = int(rng.integers(R + 1))
        fwd += -math.log(n) - math.log(R + 1)
        segment = [(i, i)]
        new_steps = steps[:s] + segment + steps[s:]
        cand = _PathStats(new_steps, state.n_allowed_dyads)
        rev = _log_kind_prob(cand.eligible_kinds(mix), "single_deletion")
        rev += -math.log(len(cand.diag))
        return Proposal(kind, s, 0, segment, rev - fwd, new_steps,
                        {"actor": i, "slot": s}, cand)

    if kind == "single_deletion":
        r = stats.diag[int(rng.integers(len(stats.diag)))]
        fwd += -math.log(len(stats.diag))
        new_steps = steps[:r] + steps[r + 1:]
        cand = _PathStats(new_steps, state.n_allowed_dyads)
        rev = _log_kind_prob(cand.eligible_kinds(mix), "single_insertion")
        rev += -math.log(n) - math.log(R)  # candidate has R-1 steps, hence R slots
        return Proposal(kind, r, 1, [], rev - fwd, new_steps, {"position": r}, cand)

    # permutation
    max_span = mix.max_permutation_span
    lengths = list(range(2, min(max_span, R) + 1))
    ell = lengths[_pick_weighted(rng, [R - L + 1 for L in lengths])]
    r1 = int(rng.integers(R - ell + 1))
    segment = [steps[r1 + k] for k in rng.permutation(ell)]
    new_steps = steps[:r1] + segment + steps[r1 + ell:]
    cand = _PathStats(new_steps, state.n_allowed_dyads)
    rev = _log_kind_prob(cand.eligible_kinds(mix), "permutation")
    # pair choice and permutation probabilities are identical in both directions
    return Proposal(kind, r1, ell, segment, rev - fwd, new_steps,
                    {"span": (r1, r1 + ell - 1)}, cand)


class ChainState:
    """One period's path chain with cached per-step log contributions.

    With constant rates the cache holds log(1/n) + log p_choice per step and
    the count term is a function of the path length alone, so a proposal only
    re-evaluates the replaced span.  With rate effects the full path
    probability is recomputed per proposal (small-model territory).
    """

    def __init__(
        self,
        start: Digraph,
        end: Digraph,
        path: SamplePath,
        params: Parameters,
        model: ModelSpec,
        duration: float,
        rng: np.random.Generator,
        evaluator: Optional[ModelEvaluator] = None,
        validate_every: int = 0,
    ) -> None:
        if not validate_parity(path, start, end):
            raise ValueError("initial path fails the parity condition")
        self.start = start
        self.end = end
        self.path = path
        self.model = model
        self.duration = float(duration)
        self.rng = rng
        self.ev = evaluator if evaluator is not None else ModelEvaluator(model, start.n)
        self.allowed_dyads = [tuple(map(int, d)) for d in np.argwhere(self.ev.allowed)]
        self.n_allowed_dyads = len(self.allowed_dyads)
        self.validate_every = int(validate_every)
        self.proposed = {k: 0 for k in MOVE_KINDS}
        self.accepted = {k: 0 for k in MOVE_KINDS}
        self.steps_taken = 0
        self.stats = _PathStats(self.path.steps, self.n_allowed_dyads)
        self.set_params(params)

    # -- cache management --------------------------------------------------

    def set_params(self, params: Parameters) -> None:
        params.validate(self.model)
        self.params = params.copy()
        self._log_n = math.log(self.start.n)
        if self.model.constant_rates:
            si, sj = self.path.arrays()
            ok, lp = self.ev.segment_choice_logprobs(
                self.start.a.copy(), si, sj, params.beta_for_period(self.path.period)
            )
            if not ok:
                raise SamplerError("current path has an impossible step")
            self.contribs = list(lp - self._log_n)
            self._log_kappa = self._log_kappa_at(len(self.path.steps))
            self._log_prob = self._log_kappa + math.fsum(self.contribs)
        else:
            self.contribs = None
            self._log_prob = path_log_probability(
                self.path, self.start, self.params, self.model, self.duration, self.ev
            )

    def _log_kappa_at(self, R: int) -> float:
        from .paths import log_kappa_poisson

        return log_kappa_poisson(
            self.params.rates[self.path.period], self.start.n, self.duration, R
        )

    @property
    def log_probability(self) -> float:
        return self._log_prob

    def acceptance_rates(self) -> dict:
        return {
            k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else float("nan"))
            for k in MOVE_KINDS
        }

    def _state_at(self, position: int) -> np.ndarray:
        A = self.start.a.copy()
        for i, j in self.path.steps[:position]:
            if i != j:
                A[i, j] = 1.0 - A[i, j]
        return A

    def revalidate(self) -> None:
        """Assert the incremental cache agrees with a full recomputation."""
        if not validate_parity(self.path, self.start, self.end):
            raise SamplerError("chain state violates the parity condition")
        full = path_log_probability(
            self.path, self.start, self.params, self.model, self.duration, self.ev
        )
        if not math.isclose(full, self._log_prob, rel_tol=0.0, abs_tol=1e-8):
            raise SamplerError(
                f"cached log probability {self._log_prob} drifted from recomputed {full}"
            )

    # -- MH kinetics --------------------------------------------------------

    def step(self, mix: ProposalMix) -> bool:
        prop = propose(self, mix)
        self.proposed[prop.kind] += 1
        accepted = self._decide(prop)
        if accepted:
            self.accepted[prop.kind] += 1
        self.steps_taken += 1
        if self.validate_every and self.steps_taken % self.validate_every == 0:
            self.revalidate()
        return accepted

    def _decide(self, prop: Proposal) -> bool:
        if self.model.constant_rates:
            beta = self.params.beta_for_period(self.path.period)
            if prop.segment:
                si = np.array([s[0] for s in prop.segment], dtype=np.int64)
                sj = np.array([s[1] for s in prop.segment], dtype=np.int64)
                A = self._state_at(prop.at)
                ok, lp = self.ev.segment_choice_logprobs(A, si, sj, beta)
                if not ok:
                    return False
                new_contribs = list(lp - self._log_n)
            else:
                new_contribs = []
            old_sum = math.fsum(self.contribs[prop.at:prop.at + prop.replaced])
            new_R = len(self.path.steps) - prop.replaced + len(prop.segment)
            delta_target = (
                math.fsum(new_contribs)
                - old_sum
                + self._log_kappa_at(new_R)
                - self._log_kappa
            )
        else:
            cand_path = SamplePath(prop.new_steps, period=self.path.period)
            cand_lp = path_log_probability(
                cand_path, self.start, self.params, self.model, self.duration, self.ev
            )
            if cand_lp == float("-inf"):
                return False
            delta_target = cand_lp - self._log_prob
            new_contribs = None

        log_acc = delta_target + prop.log_ratio
        if log_acc < 0.0 and math.log(self.rng.random()) >= log_acc:
            return False

        # commit
        self.path.steps[prop.at:prop.at + prop.replaced] = prop.segment
        self.stats = prop.cand_stats
        if self.model.constant_rates:
            self.contribs[prop.at:prop.at + prop.replaced] = new_contribs
            self._log_kappa = self._log_kappa_at(len(self.path.steps))
            self._log_prob += delta_target
        else:
            self._log_prob = cand_lp
        return True

    def run(self, n_steps: int, mix: ProposalMix) -> "ChainState":
        if n_steps < 1:
            raise ValueError("run needs at least one step")
        for _ in range(n_steps):
            self.step(mix)
        return self


def mh_step(state: ChainState, mix: ProposalMix) -> ChainState:
    """One Metropolis-Hastings step; the state is updated in place."""
    state.step(mix)
    return state


def run_chain(state: ChainState, n_steps: int, mix: ProposalMix) -> ChainState:
    """Apply n_steps MH steps, retaining the final state for warm starts."""
    return state.run(n_steps, mix)


def score_autocorrelation(history) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate lag-1 sample autocorrelation of a draw history.

    Returns (rho, degenerate); constant coordinates get rho 0 with the
    degeneracy flag set.
    """
    h = np.asarray(history, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] < 10:
        raise ValueError(f"need at least 10 draws, got {h.shape[0]}")
    centered = h - h.mean(axis=0)
    denom = np.sum(centered**2, axis=0)
    num = np.sum(centered[:-1] * centered[1:], axis=0)
    degenerate = denom == 0.0
    rho = np.where(degenerate, 0.0, num / np.where(degenerate, 1.0, denom))
    return rho, degenerate
