"""Event-level Monte Carlo simulation of the relay pulse train.

The simulator replays the acceptance rules click by click and therefore
estimates p_total and v_ab without going through the closed-form expressions,
making it an independent stochastic cross-check of the analytic model.

Reproducibility contract: trials are processed in fixed-size chunks and chunk
``i`` draws from a dedicated Philox (counter-based) stream with key
``(seed, i)``.  Results depend only on (seed, trials, chunk_size) and are
invariant to the number of worker threads, since per-chunk integer counts are
summed.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import link_metrics
from .params import InvalidParameterError, RelayConfig

DEFAULT_CHUNK_SIZE = 250_000
MAX_TRIALS = 2 ** 62  # overflow guard; counts are accumulated as Python ints

GENERATOR_METADATA = {
    "algorithm": "philox4x64 (numpy.random.Philox)",
    "substreams": "key = (seed, chunk_index), counter from 0",
}


class DegenerateSampleError(ValueError):
    """No accepted events: the conditional visibility estimate is undefined."""


@dataclass(frozen=True)
class TrialConfig:
    """Simulation request: link, sample size and reproducibility inputs."""

    relay: RelayConfig
    trials: int
    seed: int
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self) -> None:
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InvalidParameterError(
                f"trials must be an integer >= 1, got {self.trials!r}")
        if self.trials > MAX_TRIALS:
            raise InvalidParameterError(
                f"trials must be <= {MAX_TRIALS}, got {self.trials}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError(
                f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not isinstance(self.chunk_size, int) or self.chunk_size < 1:
            raise InvalidParameterError(
                f"chunk_size must be an integer >= 1, got {self.chunk_size!r}")


@dataclass(frozen=True)
class McEstimate:
    """Counts and binomial estimators from one simulation run.

    v_ab_hat maps the fraction of agreeing sifted bits q = correct/accepted
    back to a visibility, 2q - 1.  Standard errors are the estimate-based
    binomial ones; with zero accepted events the visibility fields are NaN.
    """

    trials: int
    accepted: int
    correct: int
    p_total_hat: float
    v_ab_hat: float
    se_p_total: float
    se_v_ab: float


@dataclass(frozen=True)
class _PulseModel:
    """Per-station Bernoulli weights derived from a RelayConfig."""

    genuine: float       # photon detected, no wrong-side dark count
    rescue: float        # photon lost, dark count fakes the click
    merge_rescue: float  # merged Bell outcome completed by a dark count
    v_chain: float       # whole-chain optical visibility
    n_terminals: int
    n_bells: int

    @classmethod
    def from_config(cls, relay: RelayConfig) -> "_PulseModel":
        lm = link_metrics(relay)
        dk = relay.detector.dark_prob
        s = lm.t_section * relay.detector.eta
        n_bells = (relay.n_sections - 1) // 2
        return cls(
            genuine=s * (1.0 - dk),
            rescue=(1.0 - s) * 2.0 * dk * (1.0 - dk),
            merge_rescue=2.0 * dk,
            v_chain=relay.channel.v_opt ** relay.n_sections,
            n_terminals=relay.n_sections - 2 * n_bells,
            n_bells=n_bells,
        )


def _run_chunk(model: _PulseModel, size: int, seed: int,
               chunk_index: int) -> tuple[int, int]:
    """Simulate one chunk of pulses; returns (accepted, correct) counts."""
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, chunk_index], dtype=np.uint64)))
    g = model.genuine
    gr = model.genuine + model.rescue

    accepted = rng.random(size) < 0.5          # basis sifting
    all_genuine = np.ones(size, dtype=bool)

    for _ in range(model.n_terminals):
        u = rng.random(size)
        accepted &= u < gr
        all_genuine &= u < g

    for _ in range(model.n_bells):
        u1 = rng.random(size)
        u2 = rng.random(size)
        resolved = rng.random(size) < 0.5      # which Bell states landed
        rescued = rng.random(size) < model.merge_rescue
        g1 = u1 < g
        g2 = u2 < g
        both = g1 & g2
        # Two genuine clicks: accepted if resolved, or if the merged single
        # click is completed by a dark count.  Otherwise each photon-less
        # side must be faked by a dark count.
        accepted &= (u1 < gr) & (u2 < gr) & (~both | resolved | rescued)
        all_genuine &= both & resolved

    clean_optics = rng.random(size) < model.v_chain
    agree_coin = rng.random(size) < 0.5
    signal = accepted & all_genuine & clean_optics
    correct = signal | (accepted & ~signal & agree_coin)
    return int(accepted.sum()), int(correct.sum())


def simulate(config: TrialConfig, workers: int = 1) -> McEstimate:
    """Run the pulse train and return counts with binomial estimators.

    ``workers`` only controls thread fan-out over chunks; it never changes
    the result.
    """
    if workers < 1:
        raise InvalidParameterError(f"workers must be >= 1, got {workers}")
    model = _PulseModel.from_config(config.relay)
    n_chunks = (config.trials + config.chunk_size - 1) // config.chunk_size

    def run(i: int) -> tuple[int, int]:
        size = min(config.chunk_size, config.trials - i * config.chunk_size)
        return _run_chunk(model, size, config.seed, i)

    accepted = 0
    correct = 0
    if workers == 1 or n_chunks == 1:
        results = map(run, range(n_chunks))
        for a, c in results:
            accepted += a
            correct += c
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for a, c in pool.map(run, range(n_chunks)):
                accepted += a
                correct += c

    p_hat = accepted / config.trials
    se_p = math.sqrt(p_hat * (1.0 - p_hat) / config.trials)
    if accepted > 0:
        q = correct / accepted
        v_hat = 2.0 * q - 1.0
        se_v = 2.0 * math.sqrt(q * (1.0 - q) / accepted)
    else:
        v_hat = math.nan
        se_v = math.nan
    return McEstimate(config.trials, accepted, correct, p_hat, v_hat,
                      se_p, se_v)


def zscore(est: McEstimate, analytic_p_total: float,
           analytic_v_ab: float) -> tuple[float, float]:
    """Standardized deviations of the estimates from the analytic values.

    Standard errors are the binomial ones evaluated at the analytic values
    (the null hypothesis), so the scores stay defined for sparse samples:

        z_p = (p_hat - p) / sqrt(p (1 - p) / trials)
        z_v = (v_hat - v) / (2 sqrt(q (1 - q) / accepted)),  q = (1 + v) / 2

    Raises DegenerateSampleError when no event was accepted, since the
    conditional visibility then has no sample at all.
    """
    if est.accepted == 0:
        raise DegenerateSampleError(
            "no accepted events; visibility z-score is undefined")
    se_p = math.sqrt(analytic_p_total * (1.0 - analytic_p_total) / est.trials)
    q = 0.5 * (1.0 + analytic_v_ab)
    se_v = 2.0 * math.sqrt(q * (1.0 - q) / est.accepted)
    return (_safe_ratio(est.p_total_hat - analytic_p_total, se_p),
            _safe_ratio(est.v_ab_hat - analytic_v_ab, se_v))


def _safe_ratio(delta: float, se: float) -> float:
    if se > 0.0:
        return delta / se
    return 0.0 if delta == 0.0 else math.copysign(math.inf, delta)
