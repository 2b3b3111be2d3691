"""Parameter estimation: method of moments and data-augmentation maximum likelihood.

Both estimators solve an equation of the form E_theta S = 0 by Robbins-Monro
stochastic approximation,

    theta_(N+1) = theta_(N) + a_N D^-1 S_N,      a_N = a1 * N^-c,

returning a tail average of the iterates.  For the method of moments S_N is
observed-minus-simulated target statistics from a fresh forward simulation;
for maximum likelihood S_N is the complete-data score evaluated on sample
paths drawn by conditional MCMC (one warm-started chain per period).

Standard errors for the ML estimate come from the missing-information
identity: observed information = conditional mean of the complete-data
information minus the conditional covariance of the complete-data score,
both estimated from long conditional runs at the estimate.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .digraph import Digraph
from .effects import EffectSet, total_statistic
from .model import ModelEvaluator, ModelSpec, Parameters, parameter_labels
from .panel import PanelData
from .paths import (
    SamplePath,
    beta_block_slice,
    complete_data_information,
    complete_data_score,
    initial_path,
)
from .rng import substream
from .sampler import ChainState, ProposalMix, score_autocorrelation
from .simulate import simulate_period

__all__ = [
    "EstimationControls",
    "EstimationResult",
    "EstimationError",
    "NumericalError",
    "mom_statistics",
    "estimate_mom",
    "estimate_ml",
    "robbins_monro_update",
    "standard_errors",
    "convergence_check",
    "likelihood_ratio",
]

logger = logging.getLogger(__name__)

#: convergence criterion: largest acceptable |mean/sd| of the defining statistic
T_RATIO_LIMIT = 0.1


class EstimationError(RuntimeError):
    """Estimation cannot proceed (bad data for the estimator, divergence)."""


class NumericalError(RuntimeError):
    """Linear-algebra failure (singular or non-positive-definite matrix)."""


@dataclass
class EstimationControls:
    """Tuning knobs for the stochastic-approximation estimators.

    The gain exponent must lie in (0.5, 1] for the averaged iterates to
    converge; the derivative matrix D is estimated before the iterations
    unless supplied explicitly.
    """

    gain_initial: float = 0.1
    gain_exponent: float = 0.75
    iterations: int = 500
    tail_fraction: float = 0.5
    mix: ProposalMix = field(default_factory=ProposalMix)
    mh_steps: Optional[int] = None  # None: max(1000, 10 * observed changes in the period)
    autocorr_threshold: float = 0.3
    max_step_doublings: int = 3
    seed: int = 0
    derivative_matrix: Optional[np.ndarray] = None
    d_regularization: float = 1e-6
    divergence_bound: float = 50.0
    phase1_draws: int = 30
    convergence_runs: int = 2000
    se_draws: int = 1000
    check_thin: Optional[int] = None
    min_rate: float = 1e-3
    validate_every: int = 0
    compute_se: bool = True
    diagnostics_csv: Optional[str] = None

    def __post_init__(self):
        if not (0.5 < self.gain_exponent <= 1.0):
            raise ValueError(f"gain exponent must be in (0.5, 1], got {self.gain_exponent}")
        if not (0.0 < self.tail_fraction < 1.0):
            raise ValueError(f"tail fraction must be in (0, 1), got {self.tail_fraction}")
        if self.gain_initial <= 0.0:
            raise ValueError("initial gain must be positive")
        if self.iterations < 2:
            raise ValueError("need at least 2 iterations")
        if self.derivative_matrix is not None:
            d = np.asarray(self.derivative_matrix, dtype=np.float64)
            if d.ndim != 2 or d.shape[0] != d.shape[1]:
                raise ValueError("derivative matrix must be square")
            if np.abs(d - d.T).max() > 1e-10:
                raise ValueError("derivative matrix must be symmetric")
            if np.linalg.eigvalsh(d).min() <= 1e-10:
                raise ValueError("derivative matrix must be positive definite")
            self.derivative_matrix = d

    def steps_for_period(self, changes: int) -> int:
        if self.mh_steps is not None:
            return self.mh_steps
        return max(1000, 10 * changes)


@dataclass
class EstimationResult:
    theta: Parameters
    estimator: str
    converged: bool
    labels: list
    standard_errors: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    convergence_ratios: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    def flat(self) -> np.ndarray:
        return self.theta.flatten()


# ---------------------------------------------------------------------------
# method of moments


def mom_statistics(panel: PanelData, model: ModelSpec,
                   waves: Optional[Sequence[Digraph]] = None) -> np.ndarray:
    """Target statistic vector: per-period change counts, then effect totals.

    The effect totals are evaluated at each period's end wave (relative to
    its start wave for path-dependent effects) and summed over periods, or
    kept per period when the model has period-specific objective parameters.
    Passing ``waves`` substitutes simulated waves for the observed ones.
    """
    w = list(waves) if waves is not None else panel.waves
    P = panel.n_periods
    L = model.n_effects
    changes = [float(panel.waves[m].hamming(w[m + 1])) for m in range(P)]
    # change counts are always measured against the observed starting wave
    per_period = np.zeros((P, L))
    for m in range(P):
        for k, e in enumerate(model.effects.objective):
            per_period[m, k] = total_statistic(e, panel.waves[m], w[m + 1], model.covariates)
    stats = per_period.ravel() if model.per_period_beta else per_period.sum(axis=0)
    return np.concatenate([changes, stats])


def _simulated_mom_statistics(panel, model, params, ev, rng) -> np.ndarray:
    waves = [panel.waves[0]]
    for m in range(panel.n_periods):
        res = simulate_period(
            panel.waves[m], params, model, float(panel.durations[m]), rng,
            period=m, evaluator=ev,
        )
        waves.append(res.end_state)
    return mom_statistics(panel, model, waves)


def _regularize_spd(d: np.ndarray, reg: float) -> np.ndarray:
    d = (d + d.T) / 2.0
    w = np.linalg.eigvalsh(d)
    if w.min() <= 1e-10:
        bump = max(reg * np.trace(d) / len(d), -w.min() + reg * max(np.trace(d) / len(d), 1.0))
        d = d + bump * np.eye(len(d))
    return d


def robbins_monro_update(theta_vec: np.ndarray, score: np.ndarray, a_n: float,
                         d_matrix: np.ndarray) -> np.ndarray:
    """One gain-weighted quasi-Newton step: theta + a_n * D^-1 score."""
    try:
        step = np.linalg.solve(d_matrix, np.asarray(score, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"derivative matrix is singular: {exc}") from exc
    return np.asarray(theta_vec, dtype=np.float64) + a_n * step


def _mom_initial(panel: PanelData, model: ModelSpec) -> Parameters:
    """Heuristic starting point: rates from observed change counts, beta ~ 0."""
    rates = np.array([
        1.5 * max(panel.change_count(m), 1) / (panel.n * panel.durations[m]) + 0.2
        for m in range(panel.n_periods)
    ])
    L = model.n_effects
    beta = np.zeros((panel.n_periods, L)) if model.per_period_beta else np.zeros(L)
    b = beta.reshape(-1, L)
    for k, e in enumerate(model.effects.objective):
        if e.kind == "outdegree":
            b[:, k] = -1.0  # sparse networks: discourage indiscriminate tie creation
    return Parameters(rates=rates, beta=beta)


def _mom_jacobian(panel, model, params, controls, ev, label: str) -> np.ndarray:
    """Common-random-number finite-difference Jacobian of the expected statistics."""
    vec = params.flatten()
    dim = len(vec)
    P, L, K = panel.n_periods, model.n_effects, model.n_rate_effects
    jac = np.zeros((dim, dim))
    for rep in range(controls.phase1_draws):
        for k in range(dim):
            h = 0.1 * max(1.0, abs(vec[k]))
            plus = vec.copy()
            plus[k] = vec[k] + h
            minus = vec.copy()
            minus[k] = max(vec[k] - h, controls.min_rate) if k < P else vec[k] - h
            pp = Parameters.from_flat(plus, P, L, K, model.per_period_beta)
            pm = Parameters.from_flat(minus, P, L, K, model.per_period_beta)
            sp = _simulated_mom_statistics(panel, model, pp, ev,
                                           substream(controls.seed, label, rep, k, 0))
            sm = _simulated_mom_statistics(panel, model, pm, ev,
                                           substream(controls.seed, label, rep, k, 0))
            jac[:, k] += (sp - sm) / (plus[k] - minus[k])
    return jac / controls.phase1_draws


def _check_periods(panel: PanelData) -> None:
    for m in range(panel.n_periods):
        if panel.change_count(m) == 0:
            raise EstimationError(
                f"period {m + 1} has no observed tie changes; the rate parameter "
                "would sit at the zero boundary. Merge this period with a neighbor."
            )


def estimate_mom(panel: PanelData, model: ModelSpec,
                 controls: Optional[EstimationControls] = None) -> EstimationResult:
    """Method-of-moments fit by stochastic approximation.

    Requires constant rate functions (one statistic per rate parameter);
    models with rate effects must be fitted by maximum likelihood.
    """
    controls = controls or EstimationControls()
    if model.n_rate_effects > 0:
        raise EstimationError(
            "the method-of-moments target statistics identify per-period base "
            "rates only; fit rate-effect models with estimate_ml"
        )
    _check_periods(panel)
    ev = ModelEvaluator(model, panel.n)
    obs = mom_statistics(panel, model)
    params = _mom_initial(panel, model)
    P, L = panel.n_periods, model.n_effects

    d_matrix = controls.derivative_matrix
    if d_matrix is None:
        d_matrix = _regularize_spd(
            _mom_jacobian(panel, model, params, controls, ev, "mom-jac"),
            controls.d_regularization,
        )

    vec = params.flatten()
    traj = np.zeros((controls.iterations, len(vec)))
    diverged = False
    for it in range(1, controls.iterations + 1):
        a_n = controls.gain_initial * it ** (-controls.gain_exponent)
        p_it = Parameters.from_flat(vec, P, L, 0, model.per_period_beta)
        sim = _simulated_mom_statistics(panel, model, p_it, ev,
                                        substream(controls.seed, "mom-iter", it))
        vec = robbins_monro_update(vec, obs - sim, a_n, d_matrix)
        vec[:P] = np.maximum(vec[:P], controls.min_rate)
        if np.linalg.norm(vec) > controls.divergence_bound:
            diverged = True
            logger.warning("method-of-moments iteration diverged at step %d", it)
            break
        traj[it - 1] = vec

    used = it if not diverged else it - 1
    tail_from = max(0, used - max(1, int(round(controls.tail_fraction * used))))
    theta_vec = traj[tail_from:used].mean(axis=0) if used > 0 else vec
    theta = Parameters.from_flat(theta_vec, P, L, 0, model.per_period_beta)

    ratios, sims = _mom_check(panel, model, theta, controls, ev, obs)
    # delta-method covariance: D^-1 Cov(S) D^-T with D re-estimated at the fit
    se = cov = None
    if controls.compute_se and not diverged:
        d_hat = _mom_jacobian(panel, model, theta, controls, ev, "mom-jac-final")
        try:
            dinv = np.linalg.inv(d_hat)
            cov = dinv @ np.cov(sims.T) @ dinv.T
            cov = (cov + cov.T) / 2.0
            se = np.sqrt(np.maximum(np.diag(cov), 0.0))
        except np.linalg.LinAlgError:
            logger.warning("could not invert the moment Jacobian; no MoM standard errors")

    converged = (not diverged) and bool(np.all(np.abs(ratios) < T_RATIO_LIMIT))
    return EstimationResult(
        theta=theta,
        estimator="mom",
        converged=converged,
        labels=parameter_labels(model, P),
        standard_errors=se,
        covariance=cov,
        convergence_ratios=ratios,
        diagnostics={
            "iterations": used,
            "tail_from": tail_from,
            "diverged": diverged,
            "seed": controls.seed,
        },
    )


def _mom_check(panel, model, theta, controls, ev, obs):
    sims = np.zeros((controls.convergence_runs, len(obs)))
    for r in range(controls.convergence_runs):
        sims[r] = _simulated_mom_statistics(panel, model, theta, ev,
                                            substream(controls.seed, "mom-check", r))
    dev = sims - obs
    sd = dev.std(axis=0, ddof=1)
    ratios = np.where(sd > 0.0, dev.mean(axis=0) / np.where(sd > 0, sd, 1.0), np.nan)
    return ratios, sims


# ---------------------------------------------------------------------------
# maximum likelihood (MCSA)


def _build_chains(panel, model, params, controls, ev, tag: str) -> list:
    chains = []
    for m in range(panel.n_periods):
        rng = substream(controls.seed, tag, m)
        path = initial_path(panel.waves[m], panel.waves[m + 1], rng, period=m)
        chains.append(
            ChainState(
                panel.waves[m], panel.waves[m + 1], path, params, model,
                float(panel.durations[m]), rng, evaluator=ev,
                validate_every=controls.validate_every,
            )
        )
    return chains


def _total_score(chains, panel, params, model, ev) -> np.ndarray:
    total = None
    for m, chain in enumerate(chains):
        s = complete_data_score(chain.path, panel.waves[m], params, model,
                                float(panel.durations[m]), ev)
        total = s if total is None else total + s
    return total


def _ml_information(chains, panel, params, model, ev, controls, steps) -> np.ndarray:
    """Monte Carlo mean of the complete-data information over conditional draws."""
    dim = params.dimension()
    acc = np.zeros((dim, dim))
    spacing = max(1, steps // max(1, controls.phase1_draws))
    for _ in range(controls.phase1_draws):
        for m, chain in enumerate(chains):
            chain.run(spacing, controls.mix)
            acc += complete_data_information(chain.path, panel.waves[m], params, model,
                                             float(panel.durations[m]), ev)
    return acc / controls.phase1_draws


def estimate_ml(
    panel: PanelData,
    model: ModelSpec,
    controls: Optional[EstimationControls] = None,
    initial: Optional[Parameters] = None,
) -> EstimationResult:
    """Maximum-likelihood fit via conditional MCMC plus stochastic approximation.

    The starting value defaults to a method-of-moments fit (with rate-effect
    coefficients, which MoM cannot estimate, started at zero).  One chain per
    period is kept warm across iterations; D is the Monte Carlo estimate of
    the complete-data information at the starting value and stays fixed.
    """
    controls = controls or EstimationControls()
    _check_periods(panel)
    ev = ModelEvaluator(model, panel.n)
    P, L, K = panel.n_periods, model.n_effects, model.n_rate_effects

    if initial is None:
        if K == 0:
            mom_controls = replace(controls, compute_se=False, diagnostics_csv=None)
            initial = estimate_mom(panel, model, mom_controls).theta
        else:
            base = ModelSpec(
                effects=EffectSet(model.effects.objective, ()),
                covariates=model.covariates, policy=model.policy,
                per_period_beta=model.per_period_beta,
            )
            mom_controls = replace(controls, compute_se=False, diagnostics_csv=None)
            mom = estimate_mom(panel, base, mom_controls).theta
            initial = Parameters(rates=mom.rates, beta=mom.beta, rate_coefs=np.zeros(K))
    initial.validate(model)

    mix = controls.mix if model.policy.allow_keep else controls.mix.without_keep_moves()
    controls_mix = replace(controls, mix=mix)
    steps = [controls.steps_for_period(panel.change_count(m)) for m in range(P)]
    chains = _build_chains(panel, model, initial, controls, ev, "ml-chain")
    for m, chain in enumerate(chains):
        chain.run(steps[m], mix)  # burn-in from the deterministic initial path

    d_matrix = controls.derivative_matrix
    if d_matrix is None:
        d_matrix = _regularize_spd(
            _ml_information(chains, panel, initial, model, ev, controls_mix, max(steps)),
            controls.d_regularization,
        )

    vec = initial.flatten()
    dim = len(vec)
    traj = np.zeros((controls.iterations, dim))
    scores = np.zeros((controls.iterations, dim))
    diverged = False
    doublings = 0
    clamped = 0
    csv_writer = _diagnostics_writer(controls.diagnostics_csv)
    window = 50

    for it in range(1, controls.iterations + 1):
        p_it = Parameters.from_flat(vec, P, L, K, model.per_period_beta)
        before = (
            [(dict(c.proposed), dict(c.accepted)) for c in chains] if csv_writer else None
        )
        for m, chain in enumerate(chains):
            chain.set_params(p_it)
            chain.run(steps[m], mix)
        s_xv = _total_score(chains, panel, p_it, model, ev)
        if not np.all(np.isfinite(s_xv)):
            raise NumericalError("complete-data score is not finite")
        scores[it - 1] = s_xv
        a_n = controls.gain_initial * it ** (-controls.gain_exponent)
        vec = robbins_monro_update(vec, s_xv, a_n, d_matrix)
        low = vec[:P] < controls.min_rate
        clamped += int(low.sum())
        vec[:P] = np.maximum(vec[:P], controls.min_rate)
        traj[it - 1] = vec
        if csv_writer:
            _log_acceptance(csv_writer, it, chains, before)
        if np.linalg.norm(vec) > controls.divergence_bound:
            diverged = True
            logger.warning("maximum-likelihood iteration diverged at step %d", it)
            break
        if (
            it % window == 0
            and it >= window
            and doublings < controls.max_step_doublings
        ):
            rho, _ = score_autocorrelation(scores[it - window:it])
            if np.nanmax(np.abs(rho)) > controls.autocorr_threshold:
                steps = [2 * s for s in steps]
                doublings += 1

    if csv_writer:
        csv_writer[0].close()
    used = it if not diverged else it - 1
    tail_from = max(0, used - max(1, int(round(controls.tail_fraction * used))))
    theta_vec = traj[tail_from:used].mean(axis=0) if used > 0 else vec
    theta = Parameters.from_flat(theta_vec, P, L, K, model.per_period_beta)

    se = cov = ratios = None
    se_diag: dict = {}
    if not diverged:
        ratios = convergence_check(panel, model, theta, estimator="ml",
                                   controls=controls_mix, chains=chains)
        if controls.compute_se:
            try:
                cov, se, se_diag = standard_errors(panel, model, theta, controls_mix,
                                                   chains=chains)
            except NumericalError as exc:
                logger.warning("standard errors unavailable: %s", exc)
                se_diag = {"error": str(exc)}

    converged = (
        not diverged
        and ratios is not None
        and bool(np.all(np.isfinite(ratios)))
        and bool(np.all(np.abs(ratios) < T_RATIO_LIMIT))
    )
    rho_last, _ = score_autocorrelation(scores[max(0, used - window):used]) if used >= 10 else (None, None)
    return EstimationResult(
        theta=theta,
        estimator="ml",
        converged=converged,
        labels=parameter_labels(model, P),
        standard_errors=se,
        covariance=cov,
        convergence_ratios=ratios,
        diagnostics={
            "iterations": used,
            "tail_from": tail_from,
            "diverged": diverged,
            "mh_steps": steps,
            "step_doublings": doublings,
            "rate_clamps": clamped,
            "acceptance_rates": [
                {k: round(v, 4) if not math.isnan(v) else None
                 for k, v in c.acceptance_rates().items()}
                for c in chains
            ],
            "score_autocorrelation": None if rho_last is None else [round(float(r), 4) for r in rho_last],
            "seed": controls.seed,
            **se_diag,
        },
    )


def _diagnostics_writer(path):
    if path is None:
        return None
    fh = open(path, "w", newline="", encoding="utf-8")
    writer = csv.writer(fh)
    writer.writerow(["iteration", "kind", "proposed", "accepted"])
    return (fh, writer)


def _log_acceptance(csv_writer, iteration, chains, before):
    fh, writer = csv_writer
    totals_prop: dict = {}
    totals_acc: dict = {}
    for chain, (prev_prop, prev_acc) in zip(chains, before):
        for kind in chain.proposed:
            totals_prop[kind] = totals_prop.get(kind, 0) + chain.proposed[kind] - prev_prop[kind]
            totals_acc[kind] = totals_acc.get(kind, 0) + chain.accepted[kind] - prev_acc[kind]
    for kind in totals_prop:
        writer.writerow([iteration, kind, totals_prop[kind], totals_acc.get(kind, 0)])
    fh.flush()


# ---------------------------------------------------------------------------
# diagnostics at a fitted value


def _conditional_draws(panel, model, theta, controls, chains, ev, n_draws, thin, collect_info):
    """Thinned conditional draws of the total score (and optionally information)."""
    dim = theta.dimension()
    scores = np.zeros((n_draws, dim))
    infos = np.zeros((dim, dim)) if collect_info else None
    mix = controls.mix
    for d in range(n_draws):
        for chain in chains:
            chain.run(thin, mix)
        scores[d] = _total_score(chains, panel, theta, model, ev)
        if collect_info:
            for m, chain in enumerate(chains):
                infos += complete_data_information(
                    chain.path, panel.waves[m], theta, model,
                    float(panel.durations[m]), ev,
                )
    if collect_info:
        infos /= n_draws
    return scores, infos


def convergence_check(
    panel: PanelData,
    model: ModelSpec,
    theta: Parameters,
    estimator: str = "ml",
    controls: Optional[EstimationControls] = None,
    runs: Optional[int] = None,
    chains: Optional[list] = None,
) -> np.ndarray:
    """Per-coordinate t-ratios of the estimator's defining statistic at theta.

    For the method of moments the statistic is simulated-minus-observed
    moments over fresh forward simulations; for maximum likelihood it is the
    complete-data score over conditional MCMC draws.  A fit counts as
    converged when every |ratio| is below 0.1.
    """
    controls = controls or EstimationControls()
    runs = runs if runs is not None else controls.convergence_runs
    ev = ModelEvaluator(model, panel.n)
    theta.validate(model)
    if estimator == "mom":
        obs = mom_statistics(panel, model)
        sims = np.zeros((runs, len(obs)))
        for r in range(runs):
            sims[r] = _simulated_mom_statistics(panel, model, theta, ev,
                                                substream(controls.seed, "check", r))
        draws = sims - obs
    elif estimator == "ml":
        if chains is None:
            chains = _build_chains(panel, model, theta, controls, ev, "check-chain")
            steps = [controls.steps_for_period(panel.change_count(m))
                     for m in range(panel.n_periods)]
            for m, chain in enumerate(chains):
                chain.run(steps[m], controls.mix)
        else:
            for chain in chains:
                chain.set_params(theta)
        base_steps = controls.steps_for_period(max(panel.change_count(m)
                                                   for m in range(panel.n_periods)))
        thin = controls.check_thin if controls.check_thin is not None else max(1, base_steps // 40)
        draws, _ = _conditional_draws(panel, model, theta, controls, chains, ev,
                                      runs, thin, collect_info=False)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    sd = draws.std(axis=0, ddof=1)
    ratios = np.where(sd > 0.0, draws.mean(axis=0) / np.where(sd > 0.0, sd, 1.0), np.nan)
    if np.any(sd == 0.0):
        logger.warning("degenerate convergence statistic: zero variance in some coordinate")
    return ratios


def standard_errors(
    panel: PanelData,
    model: ModelSpec,
    theta: Parameters,
    controls: Optional[EstimationControls] = None,
    chains: Optional[list] = None,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """ML covariance matrix and standard errors via the missing-information identity.

    Conditional draws are thinned until the lag-1 autocorrelation of every
    score coordinate drops below the controls threshold; the observed
    information is the mean complete-data information minus the sample
    covariance of the scores over those draws.
    """
    controls = controls or EstimationControls()
    ev = ModelEvaluator(model, panel.n)
    theta.validate(model)
    if chains is None:
        chains = _build_chains(panel, model, theta, controls, ev, "se-chain")
        steps = [controls.steps_for_period(panel.change_count(m))
                 for m in range(panel.n_periods)]
        for m, chain in enumerate(chains):
            chain.run(steps[m], controls.mix)
    else:
        for chain in chains:
            chain.set_params(theta)

    base_steps = controls.steps_for_period(max(panel.change_count(m)
                                               for m in range(panel.n_periods)))
    thin = controls.check_thin if controls.check_thin is not None else max(1, base_steps // 40)
    pilot = 100
    for _ in range(5):
        trial, _ = _conditional_draws(panel, model, theta, controls, chains, ev,
                                      pilot, thin, collect_info=False)
        rho, degenerate = score_autocorrelation(trial)
        if np.all(np.abs(rho[~degenerate]) <= controls.autocorr_threshold):
            break
        thin *= 2

    scores, info_mean = _conditional_draws(panel, model, theta, controls, chains, ev,
                                           controls.se_draws, thin, collect_info=True)
    score_cov = np.cov(scores.T, ddof=1)
    observed_info = info_mean - score_cov
    observed_info = (observed_info + observed_info.T) / 2.0
    eigs = np.linalg.eigvalsh(observed_info)
    detail = {"se_thin": thin, "observed_info_min_eig": float(eigs.min())}
    if eigs.min() <= 1e-10:
        logger.warning("observed information nearly singular (min eigenvalue %g)", eigs.min())
        observed_info = _regularize_spd(observed_info, controls.d_regularization)
        eigs = np.linalg.eigvalsh(observed_info)
        if eigs.min() <= 0.0:
            raise NumericalError("observed information is not positive definite")
        detail["regularized"] = True
    cov = np.linalg.inv(observed_info)
    cov = (cov + cov.T) / 2.0
    return cov, np.sqrt(np.diag(cov)), detail


# ---------------------------------------------------------------------------
# path-sampling likelihood ratio


def likelihood_ratio(
    panel: PanelData,
    model: ModelSpec,
    theta0: Parameters,
    theta1: Parameters,
    grid_points: int = 1000,
    draws_per_point: int = 10,
    controls: Optional[EstimationControls] = None,
    steps_per_draw: int = 10,
) -> float:
    """Log likelihood ratio log p(x; theta1) - log p(x; theta0) by path sampling.

    The score is averaged over conditional draws along the straight segment
    from theta0 to theta1 and integrated against the segment direction; each
    grid point's chains start from the previous grid point's end state.
    """
    controls = controls or EstimationControls()
    theta0.validate(model)
    theta1.validate(model)
    v0 = theta0.flatten()
    v1 = theta1.flatten()
    if v0.shape != v1.shape:
        raise ValueError("theta0 and theta1 must have the same layout")
    direction = v1 - v0
    P, L, K = panel.n_periods, model.n_effects, model.n_rate_effects
    ev = ModelEvaluator(model, panel.n)
    mix = controls.mix if model.policy.allow_keep else controls.mix.without_keep_moves()

    chains = _build_chains(panel, model, theta0, controls, ev, "lr-chain")
    steps = [controls.steps_for_period(panel.change_count(m)) for m in range(P)]
    for m, chain in enumerate(chains):
        chain.run(steps[m], mix)

    total = 0.0
    for h in range(grid_points + 1):
        t = h / grid_points
        th = Parameters.from_flat(v0 + t * direction, P, L, K, model.per_period_beta)
        for chain in chains:
            chain.set_params(th)
        for _ in range(draws_per_point):
            for chain in chains:
                chain.run(steps_per_draw, mix)
            s = _total_score(chains, panel, th, model, ev)
            total += float(direction @ s)
    return total / (draws_per_point * (grid_points + 1))
