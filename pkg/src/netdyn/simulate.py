"""Forward simulation of the continuous-time network chain between waves.

With constant rates the number of opportunities in a period is Poisson with
mean n * rate * duration and the embedded jump chain is independent of the
event times, so a single Poisson draw replaces the waiting-time loop.  With
rate effects the total rate is state dependent and waiting times are drawn
exponentially, recomputed after every micro-step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .digraph import Digraph
from .model import ModelEvaluator, ModelSpec, Parameters
from .panel import PanelData

__all__ = ["SimulationResult", "simulate_period", "simulate_panel"]


@dataclass
class SimulationResult:
    end_state: Digraph
    opportunity_count: int
    micro_steps: Optional[list] = None


def simulate_period(
    start: Digraph,
    params: Parameters,
    model: ModelSpec,
    duration: float,
    rng: np.random.Generator,
    period: int = 0,
    record: bool = False,
    evaluator: Optional[ModelEvaluator] = None,
) -> SimulationResult:
    """Run the chain from ``start`` for ``duration`` time units.

    Every opportunity is an actor choosing among keeping the network or
    toggling one permitted outgoing tie; keeps are counted (and recorded)
    like any other micro-step.
    """
    if duration <= 0.0:
        raise ValueError(f"duration must be positive, got {duration}")
    params.validate(model)
    ev = evaluator if evaluator is not None else ModelEvaluator(model, start.n)
    beta = params.beta_for_period(period)
    A = start.a.copy()
    n = start.n

    if model.constant_rates:
        lam_total = n * params.rates[period]
        R = int(rng.poisson(lam_total * duration))
        actors = rng.integers(0, n, size=R)
        unif = rng.random(R)
        chosen = ev.simulate_choice_steps(A, actors, unif, beta)
        steps = [(int(i), int(j)) for i, j in zip(actors, chosen)] if record else None
        return SimulationResult(Digraph(A), R, steps)

    g = Digraph(A)
    t = 0.0
    steps: list = []
    R = 0
    while True:
        lam = ev.lambdas(g, params, period)
        lam_total = lam.sum()
        t += rng.exponential(1.0 / lam_total)
        if t > duration:
            break
        i = int(rng.choice(n, p=lam / lam_total))
        chosen = ev.simulate_choice_steps(g.a, np.array([i]), rng.random(1), beta)
        j = int(chosen[0])
        R += 1
        if record:
            steps.append((i, j))
    return SimulationResult(g, R, steps if record else None)


def simulate_panel(
    first_wave: Digraph,
    params: Parameters,
    model: ModelSpec,
    wave_times,
    rng_or_seed,
    replication: int = 0,
) -> PanelData:
    """Simulate successive waves; wave m is the end state of period m.

    ``rng_or_seed`` may be an integer seed (each period then runs on an
    independent substream keyed by seed, period, and replication index) or a
    Generator used sequentially.
    """
    from .rng import substream

    wave_times = np.asarray(wave_times, dtype=np.float64)
    if len(wave_times) < 2:
        raise ValueError("need at least two wave times")
    durations = np.diff(wave_times)
    if np.any(durations <= 0.0):
        raise ValueError(f"wave times must be strictly increasing, got {wave_times}")
    if len(durations) != params.n_periods:
        raise ValueError(
            f"{len(durations)} periods from wave times but {params.n_periods} rate parameters"
        )
    ev = ModelEvaluator(model, first_wave.n)
    waves = [first_wave.copy()]
    for m, dur in enumerate(durations):
        rng = (
            substream(rng_or_seed, "panel", replication, m)
            if isinstance(rng_or_seed, (int, np.integer))
            else rng_or_seed
        )
        res = simulate_period(waves[-1], params, model, float(dur), rng,
                              period=m, evaluator=ev)
        waves.append(res.end_state)
    return PanelData(
        waves=waves,
        durations=durations,
        covariates=dict(model.covariates),
        structural_zeros=model.policy.structural_zeros,
    )
