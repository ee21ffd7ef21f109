"""Payoff functionals and Black-Scholes closed forms used as references.

Three payoffs cover the experiment suite:

* vanilla call            (X_T - K)+
* partial lookback call   (X_T - lambda * min_[0,T] X)+
* up-and-out call         (X_T - K)+ * 1{max_[0,T] X <= L}

all discounted at e^{-r T}.  Path extrema come either from the discrete
grid states of a level or from the bridged (continuous-scheme) sampled
extrema; the caller picks the source in the spec.

The closed forms (vanilla via Black-Scholes, partial lookback and
up-and-out via the standard reflection identities for geometric Brownian
motion) serve as acceptance oracles for the Monte Carlo engine.  The
normal CDF is scipy's `ndtr` (Cephes rational approximation, absolute
error around 1e-15), so comparisons are limited by quoted rounding, not
by the CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .scheme import CoupledPathBundle

VANILLA_CALL = "vanilla-call"
PARTIAL_LOOKBACK_CALL = "partial-lookback-call"
UP_AND_OUT_CALL = "up-and-out-call"

GRID = "grid"
BRIDGED = "bridged"


@dataclass(frozen=True)
class PayoffSpec:
    """A discounted payoff plus where its extrema come from."""

    kind: str
    rate: float
    horizon: float
    strike: float = 0.0
    lookback_fraction: float = 1.0
    barrier: float = math.inf
    extrema_source: str = GRID

    def __post_init__(self):
        if self.kind not in (VANILLA_CALL, PARTIAL_LOOKBACK_CALL, UP_AND_OUT_CALL):
            raise ValueError(f"unknown payoff kind: {self.kind!r}")
        if self.extrema_source not in (GRID, BRIDGED):
            raise ValueError(f"unknown extrema source: {self.extrema_source!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.strike < 0:
            raise ValueError("strike must be >= 0")
        if self.kind == PARTIAL_LOOKBACK_CALL and self.lookback_fraction <= 0:
            raise ValueError("lookback fraction must be positive")
        if self.kind == UP_AND_OUT_CALL and self.barrier < self.strike:
            raise ValueError("barrier must be >= strike")

    @property
    def path_dependent(self) -> bool:
        return self.kind != VANILLA_CALL

    @property
    def needs_minimum(self) -> bool:
        return self.kind == PARTIAL_LOOKBACK_CALL

    @property
    def needs_maximum(self) -> bool:
        return self.kind == UP_AND_OUT_CALL


def vanilla_call(strike: float, rate: float, horizon: float) -> PayoffSpec:
    return PayoffSpec(kind=VANILLA_CALL, rate=rate, horizon=horizon, strike=strike)


def partial_lookback_call(lookback_fraction: float, rate: float, horizon: float,
                          extrema_source: str = GRID) -> PayoffSpec:
    return PayoffSpec(kind=PARTIAL_LOOKBACK_CALL, rate=rate, horizon=horizon,
                      lookback_fraction=lookback_fraction,
                      extrema_source=extrema_source)


def up_and_out_call(strike: float, barrier: float, rate: float, horizon: float,
                    extrema_source: str = GRID) -> PayoffSpec:
    return PayoffSpec(kind=UP_AND_OUT_CALL, rate=rate, horizon=horizon,
                      strike=strike, barrier=barrier,
                      extrema_source=extrema_source)


def evaluate(spec: PayoffSpec, terminal, path_min=None, path_max=None) -> np.ndarray:
    """Discounted payoff for terminal states and (optionally) path extrema.

    Works elementwise on arrays.  Extrema are required for the
    path-dependent kinds and must match the spec's extrema source
    (the caller passes grid or bridged extrema accordingly).
    """
    terminal = np.asarray(terminal, dtype=float)
    disc = math.exp(-spec.rate * spec.horizon)
    if spec.kind == VANILLA_CALL:
        return disc * np.maximum(terminal - spec.strike, 0.0)
    if spec.kind == PARTIAL_LOOKBACK_CALL:
        if path_min is None:
            raise ValueError("partial lookback call needs the path minimum")
        gross = terminal - spec.lookback_fraction * np.asarray(path_min, dtype=float)
        return disc * np.maximum(gross, 0.0)
    if path_max is None:
        raise ValueError("up-and-out call needs the path maximum")
    alive = np.asarray(path_max, dtype=float) <= spec.barrier
    return disc * np.maximum(terminal - spec.strike, 0.0) * alive


def evaluate_bundle(spec: PayoffSpec, bundle: CoupledPathBundle) -> list:
    """Per-level discounted payoffs of a coupled bundle."""
    if spec.extrema_source == BRIDGED and spec.path_dependent and not bundle.bridged:
        raise ValueError("payoff wants bridged extrema but bundle has none")
    out = []
    for r in range(1, bundle.order + 1):
        path_min = path_max = None
        if spec.needs_minimum:
            path_min = bundle.minimum(r, source=spec.extrema_source)
        if spec.needs_maximum:
            path_max = bundle.maximum(r, source=spec.extrema_source)
        out.append(evaluate(spec, bundle.terminal(r), path_min, path_max))
    return out


# ---------------------------------------------------------------------------
# Closed forms


def bs_call(spot: float, strike: float, vol: float, rate: float, horizon: float) -> float:
    """Black-Scholes call premium; degenerate strike K <= 0 prices the forward."""
    _check_bs(spot, vol, horizon)
    if strike <= 0.0:
        return spot - strike * math.exp(-rate * horizon)
    srt = vol * math.sqrt(horizon)
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * horizon) / srt
    d2 = d1 - srt
    return spot * ndtr(d1) - strike * math.exp(-rate * horizon) * ndtr(d2)


def bs_put(spot: float, strike: float, vol: float, rate: float, horizon: float) -> float:
    """Black-Scholes put via put-call parity."""
    return bs_call(spot, strike, vol, rate, horizon) - spot + strike * math.exp(-rate * horizon)


def bs_partial_lookback(spot: float, lookback_fraction: float, vol: float,
                        rate: float, horizon: float) -> float:
    """Closed-form premium of the partial lookback call (X_T - lam * min X)+.

    Valid for rate > 0.  The second term's synthetic spot lam^(2r/sigma^2)
    can overflow as vol -> 0; a put struck that deep out of the money is
    worthless, so it is cut off in log space.
    """
    _check_bs(spot, vol, horizon)
    if lookback_fraction <= 0:
        raise ValueError("lookback fraction must be positive")
    if rate <= 0:
        raise ValueError("closed form requires a positive rate")
    head = spot * bs_call(1.0, lookback_fraction, vol, rate, horizon)
    log_syn = (2.0 * rate / vol ** 2) * math.log(lookback_fraction)
    if log_syn > 690.0:
        tail = 0.0
    else:
        tail = bs_put(math.exp(log_syn), 1.0, 2.0 * rate / vol, rate, horizon)
    return head + lookback_fraction * (vol ** 2 / (2.0 * rate)) * spot * tail


def bs_up_and_out(spot: float, strike: float, barrier: float, vol: float,
                  rate: float, horizon: float) -> float:
    """Closed-form premium of the continuously monitored up-and-out call.

    Standard reflection form: the vanilla call spread (K vs L) minus the
    rebate-like digital at L, minus the same package written at the
    reflected strikes K' = K (S/L)^2, L' = L (S/L)^2 and weighted by
    (L/S)^(1+mu), mu = 2 r / sigma^2.  Returns 0 at or above the barrier.
    """
    _check_bs(spot, vol, horizon)
    if not 0 <= strike <= barrier:
        raise ValueError("need 0 <= strike <= barrier")
    if spot >= barrier:
        return 0.0
    mu = 2.0 * rate / vol ** 2
    k_ref = strike * (spot / barrier) ** 2
    l_ref = barrier * (spot / barrier) ** 2
    disc = math.exp(-rate * horizon)
    srt = vol * math.sqrt(horizon)

    def d_minus(level: float) -> float:
        return (math.log(spot / level) + (rate - 0.5 * vol * vol) * horizon) / srt

    head = (bs_call(spot, strike, vol, rate, horizon)
            - bs_call(spot, barrier, vol, rate, horizon)
            - disc * (barrier - strike) * ndtr(d_minus(barrier)))
    tail = (bs_call(spot, k_ref, vol, rate, horizon)
            - bs_call(spot, l_ref, vol, rate, horizon)
            - disc * (l_ref - k_ref) * ndtr(d_minus(l_ref)))
    return head - (barrier / spot) ** (1.0 + mu) * tail


def analytic_reference(spec: PayoffSpec, spot: float, vol: float) -> Optional[float]:
    """Closed-form price of a payoff spec under Black-Scholes, if known."""
    if spec.kind == VANILLA_CALL:
        return bs_call(spot, spec.strike, vol, spec.rate, spec.horizon)
    if spec.kind == PARTIAL_LOOKBACK_CALL:
        return bs_partial_lookback(spot, spec.lookback_fraction, vol, spec.rate,
                                   spec.horizon)
    if spec.kind == UP_AND_OUT_CALL and math.isfinite(spec.barrier):
        return bs_up_and_out(spot, spec.strike, spec.barrier, vol, spec.rate,
                             spec.horizon)
    return None


def _check_bs(spot: float, vol: float, horizon: float) -> None:
    if spot <= 0:
        raise ValueError("spot must be positive")
    if vol <= 0:
        raise ValueError("vol must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
