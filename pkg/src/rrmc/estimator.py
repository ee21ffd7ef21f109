"""Multi-step Richardson-Romberg Monte Carlo engine.

Per path a coupled bundle of R Euler levels is simulated, the payoff is
evaluated at every level and combined with the extrapolation weights;
the sample mean of the combination estimates the exact expectation with
the leading weak-error terms cancelled.  Statistics are accumulated with
a pairwise-mergeable streaming scheme and merged in batch order, so the
result is bit-identical across runs and across worker counts: every
batch owns a substream derived from (seed, labels, batch index), and a
batch's computation never depends on scheduling.

The complexity of one path is n * R(R+1)/2 unit Euler steps, which is
what the budget planner normalizes against when it allocates (n, M) for
a total budget N.

The `SyntheticExpansion` pseudo-model replaces the SDE with per-level
values mu + sum_k c_k / (r n)^(gamma_k) (+ optional noise shared across
levels); with planted coefficients it is an exact oracle for the
cancellation property and for the pilot coefficient estimator.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import payoff as payoff_mod
from .noise import RandomSource, build_schedule, derive_stream, lcm_atoms, totient_cardinality
from .payoff import PayoffSpec, analytic_reference, evaluate_bundle
from .scheme import SdeModel, simulate_coupled
from .weights import INTEGER, ErrorScale, WeightVector, weights_for_scale

DISCRETE = "discrete"
BRIDGED = "bridged"
CONSISTENT = "consistent"
INDEPENDENT = "independent"


@dataclass
class StreamingMoments:
    """Mergeable running (count, mean, sum of squared deviations)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_batch(cls, values: np.ndarray) -> "StreamingMoments":
        values = np.asarray(values, dtype=float)
        m = float(values.mean())
        return cls(count=values.size, mean=m, m2=float(((values - m) ** 2).sum()))

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        return StreamingMoments(count=total, mean=mean, m2=m2)

    def variance(self, ddof: int = 1) -> float:
        if self.count <= ddof:
            return 0.0
        return self.m2 / (self.count - ddof)

    def std_error(self) -> float:
        if self.count == 0:
            return 0.0
        return math.sqrt(self.variance() / self.count)


@dataclass(frozen=True)
class SyntheticExpansion:
    """Per-level values with a planted step-size expansion (no SDE).

    Level r at macro step count n evaluates to
        mean + sum_k coefficients[k-1] / (r n)^(k * ladder step)
    plus `noise_sd` times one standard normal shared by all levels of a
    path (mirroring consistent coupling).  Coefficients indexed past
    order-1 survive the combination and plant a known residual bias.
    """

    mean: float
    coefficients: tuple = ()
    noise_sd: float = 0.0
    name: str = "synthetic-expansion"

    def level_value(self, r: int, macro_steps: int, ladder_step: float) -> float:
        value = self.mean
        for k, c in enumerate(self.coefficients, start=1):
            value += c / float(r * macro_steps) ** (k * float(ladder_step))
        return value


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything `estimate` needs, validated on construction."""

    model: Union[SdeModel, SyntheticExpansion]
    payoff: Optional[PayoffSpec]
    order: int
    macro_steps: int
    samples: int
    scale: ErrorScale = INTEGER
    coupling: str = CONSISTENT
    scheme: str = DISCRETE
    seed: int = 0
    schedule_kind: str = "sparing"
    batch_size: int = 65536
    workers: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.order < 1 or self.macro_steps < 1:
            raise ValueError("order and macro_steps must be >= 1")
        if self.batch_size < 1 or self.workers < 1:
            raise ValueError("batch_size and workers must be >= 1")
        if self.coupling not in (CONSISTENT, INDEPENDENT):
            raise ValueError(f"unknown coupling: {self.coupling!r}")
        if self.scheme not in (DISCRETE, BRIDGED):
            raise ValueError(f"unknown scheme: {self.scheme!r}")
        synthetic = isinstance(self.model, SyntheticExpansion)
        if not synthetic and self.payoff is None:
            raise ValueError("SDE models need a payoff")
        if synthetic:
            self.scale.ladder_step(self.order)  # must be a uniform ladder
            return
        if self.scale.kind == "half-order":
            if self.scheme != DISCRETE or not self.payoff.path_dependent:
                raise ValueError(
                    "half-order scale applies to the discrete scheme with "
                    "path-dependent payoffs only"
                )
        if self.scheme == BRIDGED and self.scale.kind != "integer":
            raise ValueError("the bridged scheme pairs with the integer scale")
        if (self.payoff.path_dependent
                and self.payoff.extrema_source == payoff_mod.BRIDGED
                and self.scheme != BRIDGED):
            raise ValueError("payoff wants bridged extrema: use scheme='bridged'")

    @property
    def synthetic(self) -> bool:
        return isinstance(self.model, SyntheticExpansion)


@dataclass
class EstimateReport:
    """Combined estimator output plus run metadata."""

    estimate: float
    variance: float
    std_error: float
    samples: int
    order: int
    macro_steps: int
    scale_kind: str
    coupling: str
    scheme: str
    seed: int
    wall_time_s: float
    gaussians_drawn: int
    uniforms_drawn: int
    analytic: Optional[float] = None
    error: Optional[float] = None
    blowups: int = 0


def combination_weights(config: EstimatorConfig) -> WeightVector:
    return weights_for_scale(config.order, config.scale)


def _batches(total: int, batch_size: int):
    out = []
    b = 0
    done = 0
    while done < total:
        size = min(batch_size, total - done)
        out.append((b, size))
        b += 1
        done += size
    return out


def _variate_counts(config: EstimatorConfig):
    """Per-path (gaussians, uniforms) implied by the consumption contract."""
    if config.synthetic:
        return (1 if config.model.noise_sd > 0 else 0), 0
    r_sum = config.order * (config.order + 1) // 2
    q = config.model.noise_dim
    if config.coupling == CONSISTENT:
        per_macro = (totient_cardinality(config.order)
                     if config.schedule_kind == "sparing" else lcm_atoms(config.order))
    else:
        per_macro = r_sum
    gauss = config.macro_steps * per_macro * q
    uni = 2 * config.macro_steps * r_sum if config.scheme == BRIDGED else 0
    return gauss, uni


def _combine(weights: Sequence[float], level_values: Sequence[np.ndarray]) -> np.ndarray:
    combined = weights[0] * level_values[0]
    for w, vals in zip(weights[1:], level_values[1:]):
        combined = combined + w * vals
    return combined


def _run_batch(config: EstimatorConfig, weights, schedule, stream_labels, batch_index,
               size) -> StreamingMoments:
    source = RandomSource(config.seed,
                          derive_stream(*stream_labels, "batch", batch_index))
    if config.synthetic:
        step = config.scale.ladder_step(config.order)
        levels = [np.full(size, config.model.level_value(r, config.macro_steps, step))
                  for r in range(1, config.order + 1)]
        if config.model.noise_sd > 0:
            noise = config.model.noise_sd * source.substream("gauss").generator(
            ).standard_normal(size)
            levels = [v + noise for v in levels]
        combined = _combine(weights, levels)
        return StreamingMoments.from_batch(combined)

    bundle = simulate_coupled(
        config.model,
        config.order,
        config.macro_steps,
        config.payoff.horizon,
        source,
        coupling=config.coupling,
        bridged=config.scheme == BRIDGED,
        schedule=schedule,
        paths=size,
        keep_paths=False,
    )
    level_values = evaluate_bundle(config.payoff, bundle)
    combined = _combine(weights, level_values)
    return StreamingMoments.from_batch(combined)


def estimate(config: EstimatorConfig, analytic: Optional[float] = None,
             stream_labels: tuple = ()) -> EstimateReport:
    """Run the combined estimator over `config.samples` coupled paths.

    Deterministic given config.seed: batches own derived substreams and
    are merged in index order whatever `config.workers` is.  `analytic`
    defaults to the Black-Scholes closed form when one applies.
    """
    t0 = time.perf_counter()
    wv = combination_weights(config)
    weights = wv.as_floats()
    schedule = None
    if not config.synthetic:
        schedule = build_schedule(config.order, config.schedule_kind)

    batches = _batches(config.samples, config.batch_size)
    if config.workers == 1 or len(batches) == 1:
        stats = [_run_batch(config, weights, schedule, stream_labels, b, size)
                 for b, size in batches]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            stats = list(pool.map(
                lambda item: _run_batch(config, weights, schedule, stream_labels, *item),
                batches))

    acc = StreamingMoments()
    for s in stats:
        acc = acc.merge(s)

    if analytic is None and not config.synthetic:
        model = config.model
        if model.name == "black-scholes" and model.params:
            analytic = analytic_reference(config.payoff, spot=float(model.x0),
                                          vol=model.params["vol"])

    gauss_pp, uni_pp = _variate_counts(config)
    est = acc.mean
    return EstimateReport(
        estimate=est,
        variance=acc.variance(),
        std_error=acc.std_error(),
        samples=config.samples,
        order=config.order,
        macro_steps=config.macro_steps,
        scale_kind=config.scale.kind,
        coupling=config.coupling,
        scheme=config.scheme,
        seed=config.seed,
        wall_time_s=time.perf_counter() - t0,
        gaussians_drawn=gauss_pp * config.samples,
        uniforms_drawn=uni_pp * config.samples,
        analytic=analytic,
        error=None if analytic is None else est - analytic,
    )


def variance_ratio_experiment(config: EstimatorConfig, n_grid: Sequence[int]) -> list:
    """Consistent vs independent coupling variance across macro step counts.

    Returns one row per n with both reports and the variance ratio
    independent/consistent (the classical blow-up factor; 5 at R = 2).
    """
    rows = []
    for n in n_grid:
        cons = estimate(replace(config, macro_steps=int(n), coupling=CONSISTENT),
                        stream_labels=("variance-ratio", int(n), CONSISTENT))
        indep = estimate(replace(config, macro_steps=int(n), coupling=INDEPENDENT),
                         stream_labels=("variance-ratio", int(n), INDEPENDENT))
        ratio = math.inf if cons.variance == 0 else indep.variance / cons.variance
        if indep.variance == 0 and cons.variance == 0:
            ratio = 1.0
        rows.append({
            "macro_steps": int(n),
            "consistent": cons,
            "independent": indep,
            "variance_ratio": ratio,
        })
    return rows


def theta(order: int) -> float:
    """Prefactor Theta(R) of the optimal-budget error constant; -> 1 as R grows."""
    if order < 1:
        raise ValueError("order must be >= 1")
    R = float(order)
    p = 2.0 * R + 1.0
    return (2.0 ** (1.0 / (2.0 * p))
            * R ** (-1.0 / p)
            * (1.0 + 1.0 / R) ** (R / p)
            * ((2.0 * R) ** (-2.0 * R / p) + (2.0 * R) ** (1.0 / p)) ** 0.5)


@dataclass(frozen=True)
class BudgetPlan:
    """Complexity-optimal (n, M) under a total budget of unit Euler steps."""

    budget: float
    order: int
    variance_estimate: float
    c_tilde_estimate: float
    n_star: int
    m_star: int
    theta: float
    n_raw: float
    m_raw: float
    m_relation: float

    @property
    def steps_per_path(self) -> int:
        return self.n_star * self.order * (self.order + 1) // 2

    @property
    def complexity(self) -> int:
        return self.m_star * self.steps_per_path


def plan_budget(order: int, budget: float, variance_estimate: float,
                c_tilde_estimate: float) -> BudgetPlan:
    """Allocate (n, M) minimizing the L2 error at fixed complexity.

    n grows like budget^(1/(2R+1)) with the explicit prefactor
    ((R+1)/4)^(-1/(2R+1)) (c~^2/Var)^(1/(2R+1)); n is floored to an
    integer and M recomputed so M * n * R(R+1)/2 <= budget.  Also
    reports the asymptotic M and the mass relation M ~ Var/(2R c~^2) n^(2R).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if budget <= 0 or variance_estimate <= 0 or c_tilde_estimate == 0:
        raise ValueError("budget, variance and coefficient estimates must be positive")
    c2 = float(c_tilde_estimate) ** 2
    var = float(variance_estimate)
    R = order
    p = 2 * R + 1
    n_raw = ((R + 1) / 4.0) ** (-1.0 / p) * (c2 / var) ** (1.0 / p) * float(budget) ** (1.0 / p)
    m_raw = (2.0 / (R * (R + 1)) * ((R + 1) / 4.0) ** (1.0 / p)
             * (var / c2) ** (1.0 / p) * float(budget) ** (2.0 * R / p))
    n_star = max(1, math.floor(n_raw))
    steps = n_star * R * (R + 1) // 2
    m_star = math.floor(budget / steps)
    if m_star < 1:
        raise ValueError("budget too small for even one path at the planned step count")
    return BudgetPlan(
        budget=float(budget),
        order=order,
        variance_estimate=var,
        c_tilde_estimate=abs(float(c_tilde_estimate)),
        n_star=n_star,
        m_star=m_star,
        theta=theta(order),
        n_raw=n_raw,
        m_raw=m_raw,
        m_relation=var / (2.0 * R * c2) * float(n_star) ** (2 * R),
    )


@dataclass(frozen=True)
class PilotEstimate:
    """Rough |c~_R| estimate from a small pilot; `reliable` is False when
    the pilot noise exceeds the estimate and the planner should fall back
    to a user-supplied coefficient."""

    magnitude: float
    std_error: float
    reliable: bool


def pilot_estimate_c(config: EstimatorConfig, pilot_samples: int) -> PilotEstimate:
    """Estimate |c~_R| from combined runs at n and 2n (heuristic).

    The combined bias is ~ c~ / n^g with g = R * ladder step, so the
    difference of the two pilot estimates, normalized by
    n^-g (1 - 2^-g), estimates c~.  The two pilots use independent
    derived substreams; their standard errors add in quadrature.
    """
    if pilot_samples < 1000:
        raise ValueError("pilot needs at least 1000 samples")
    g = config.order * float(config.scale.ladder_step(config.order))
    n = config.macro_steps
    rep_n = estimate(replace(config, samples=pilot_samples),
                     stream_labels=("pilot", n))
    rep_2n = estimate(replace(config, samples=pilot_samples, macro_steps=2 * n),
                      stream_labels=("pilot", 2 * n))
    denom = n ** (-g) * (1.0 - 2.0 ** (-g))
    value = (rep_n.estimate - rep_2n.estimate) / denom
    std_error = math.hypot(rep_n.std_error, rep_2n.std_error) / denom
    return PilotEstimate(magnitude=abs(value), std_error=std_error,
                         reliable=std_error < abs(value))
