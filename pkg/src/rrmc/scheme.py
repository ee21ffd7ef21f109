"""Coupled Euler schemes over consistent or independent noise.

The engine advances R stepwise-constant Euler schemes with steps T/(r*n),
r = 1..R, through one macro step at a time, all levels fed from a single
consistent increment block (or from fresh independent noise for the
variance-comparison mode).  Optionally each level's path is augmented
with sampled extrema of the bridged (continuous) scheme: conditionally
on the two endpoints of a fine interval, the running maximum of the
scheme with frozen coefficients has the explicit inverse law

    G^{-1}(u) = (x + y + sqrt((y-x)^2 - 2*dt*sigma(x)^2*ln u)) / 2

and the minimum mirrors it with a minus sign.  The diffusion coefficient
is frozen at the *left* endpoint of the interval.  Bridge uniforms are
drawn from a dedicated substream per level ("bridge", r), independent of
the Gaussian stream and across levels, while the skeletons themselves
stay consistently coupled.

State blow-up (any non-finite component) raises `BlowUpError` rather
than clamping: silently flooring states would bias every estimator built
on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dataclasses_field
from typing import Callable, Optional, Union

import numpy as np

from .noise import IncrementSchedule, RandomSource, build_schedule


class BlowUpError(RuntimeError):
    """A scheme state became non-finite (overflow / NaN)."""

    def __init__(self, time: float, bad_paths: int, level: Optional[int] = None):
        self.time = time
        self.bad_paths = bad_paths
        self.level = level
        where = f" at level {level}" if level is not None else ""
        super().__init__(
            f"numerical blow-up: {bad_paths} path(s) non-finite at t={time:.6g}{where}"
        )


@dataclass(frozen=True)
class SdeModel:
    """Drift/diffusion pair dX = b(t, X) dt + sigma(t, X) dW.

    For dim == noise_dim == 1 the coefficients map a state array of shape
    (paths,) to an array of the same shape.  For higher dimensions drift
    maps (paths, d) -> (paths, d) and diffusion (paths, d) -> (paths, d, q).
    Coefficient callables must be pure (no internal state).  `params`
    carries the named scalar parameters of stock models so reporting
    layers can look up closed forms.
    """

    dim: int
    noise_dim: int
    drift: Callable
    diffusion: Callable
    x0: Union[float, np.ndarray]
    name: str = "sde"
    params: dict = dataclasses_field(default_factory=dict)

    @property
    def scalar(self) -> bool:
        return self.dim == 1 and self.noise_dim == 1


def black_scholes(rate: float, vol: float, x0: float = 100.0) -> SdeModel:
    """Risk-neutral Black-Scholes dynamics dX = r X dt + sigma X dW."""
    return SdeModel(
        dim=1,
        noise_dim=1,
        drift=lambda t, x: rate * x,
        diffusion=lambda t, x: vol * x,
        x0=float(x0),
        name="black-scholes",
        params={"rate": float(rate), "vol": float(vol), "x0": float(x0)},
    )


def euler_step(model: SdeModel, t: float, x: np.ndarray, dt: float,
               dw: np.ndarray) -> np.ndarray:
    """One Euler-Maruyama update x + b(t,x) dt + sigma(t,x) dw.

    `dw` is the raw Brownian increment over the step (variance dt per
    component).  Raises BlowUpError if any output component is not finite.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    if model.scalar:
        y = x + model.drift(t, x) * dt + model.diffusion(t, x) * np.asarray(dw)
    else:
        sig = np.asarray(model.diffusion(t, x))
        y = x + np.asarray(model.drift(t, x)) * dt + np.einsum(
            "...dq,...q->...d", sig, np.asarray(dw))
    if not np.all(np.isfinite(y)):
        raise BlowUpError(time=t + dt, bad_paths=int(np.size(y) - np.isfinite(y).sum()))
    return y


def _check_bridge_args(dt, u):
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0):
        raise ValueError("u must lie in (0, 1]: log diverges at u = 0")
    if np.any(u > 1.0):
        raise ValueError("u must lie in (0, 1]")
    return u


def bridge_max_sample(x, y, sigma_left, dt, u):
    """Sample of the conditional maximum of one bridged Euler interval.

    x, y are the interval endpoints, sigma_left the diffusion coefficient
    frozen at the left endpoint, dt the fine step, u a uniform in (0, 1].
    Always >= max(x, y); u = 1 returns max(x, y) exactly.
    """
    u = _check_bridge_args(dt, u)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    disc = (y - x) ** 2 - 2.0 * dt * np.asarray(sigma_left) ** 2 * np.log(u)
    return 0.5 * (x + y + np.sqrt(disc))


def bridge_min_sample(x, y, sigma_left, dt, u):
    """Mirror of `bridge_max_sample`: conditional minimum, always <= min(x, y)."""
    u = _check_bridge_args(dt, u)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    disc = (y - x) ** 2 - 2.0 * dt * np.asarray(sigma_left) ** 2 * np.log(u)
    return 0.5 * (x + y - np.sqrt(disc))


@dataclass
class CoupledPathBundle:
    """R Euler paths over one noise realisation, plus optional extrema.

    Level r has r*macro_steps fine steps; `paths[r-1]`, when kept, has
    shape (n_paths, r*macro_steps + 1).  Terminal states and grid extrema
    are always recorded; `sampled_max`/`sampled_min` are present only for
    bridged simulations.
    """

    order: int
    macro_steps: int
    horizon: float
    coupling: str
    bridged: bool
    terminals: tuple
    grid_max: tuple
    grid_min: tuple
    sampled_max: Optional[tuple] = None
    sampled_min: Optional[tuple] = None
    paths: Optional[tuple] = None

    def path(self, r: int) -> np.ndarray:
        self._check_level(r)
        if self.paths is None:
            raise ValueError("bundle was simulated without keep_paths")
        return self.paths[r - 1]

    def times(self, r: int) -> np.ndarray:
        self._check_level(r)
        steps = r * self.macro_steps
        return np.arange(steps + 1) * (self.horizon / steps)

    def terminal(self, r: int) -> np.ndarray:
        self._check_level(r)
        return self.terminals[r - 1]

    def maximum(self, r: int, source: str = "grid") -> np.ndarray:
        self._check_level(r)
        if source == "grid":
            if self.grid_max[r - 1] is None:
                raise ValueError("grid extrema are tracked for scalar models only")
            return self.grid_max[r - 1]
        if source == "bridged":
            if self.sampled_max is None:
                raise ValueError("bundle has no bridged extrema")
            return self.sampled_max[r - 1]
        raise ValueError(f"unknown extrema source: {source!r}")

    def minimum(self, r: int, source: str = "grid") -> np.ndarray:
        self._check_level(r)
        if source == "grid":
            if self.grid_min[r - 1] is None:
                raise ValueError("grid extrema are tracked for scalar models only")
            return self.grid_min[r - 1]
        if source == "bridged":
            if self.sampled_min is None:
                raise ValueError("bundle has no bridged extrema")
            return self.sampled_min[r - 1]
        raise ValueError(f"unknown extrema source: {source!r}")

    def _check_level(self, r: int) -> None:
        if not 1 <= r <= self.order:
            raise ValueError(f"level must be in 1..{self.order}")


def simulate_coupled(model: SdeModel, order: int, macro_steps: int, horizon: float,
                     rng: RandomSource, *, coupling: str = "consistent",
                     bridged: bool = False,
                     schedule: Union[IncrementSchedule, str] = "sparing",
                     paths: int = 1, keep_paths: bool = True) -> CoupledPathBundle:
    """Run the R coupled Euler schemes over [0, horizon].

    One increment block is drawn per macro step; level r advances by its
    r sub-steps of size horizon/(r*macro_steps).  With `bridged=True`
    (scalar models only) conditional extrema are sampled per fine
    interval from per-level uniform substreams and accumulated into
    running path extrema; per interval the maximum's uniform is drawn
    first, then the minimum's.  Deterministic given the RandomSource:
    Gaussians come from substream "gauss", bridge uniforms from
    substream ("bridge", r).
    """
    if macro_steps < 1:
        raise ValueError("macro_steps must be >= 1")
    if order < 1:
        raise ValueError("order must be >= 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if coupling not in ("consistent", "independent"):
        raise ValueError(f"unknown coupling: {coupling!r}")
    if bridged and not model.scalar:
        raise ValueError("bridged extrema are defined for scalar models only")
    if not isinstance(rng, RandomSource):
        raise TypeError("simulate_coupled needs a RandomSource (substreams required)")

    if isinstance(schedule, str):
        schedule = build_schedule(order, schedule)
    elif schedule.order != order:
        raise ValueError("schedule order does not match")

    n_paths = paths
    levels = list(range(1, order + 1))
    gauss = rng.substream("gauss").generator()
    bridge_gens = [rng.substream("bridge", r).generator() for r in levels] if bridged else None

    scalar = model.scalar
    if scalar:
        x0 = float(model.x0)
        cur = [np.full(n_paths, x0) for _ in levels]
    else:
        x0 = np.asarray(model.x0, dtype=float)
        cur = [np.tile(x0, (n_paths, 1)) for _ in levels]

    stored = None
    if keep_paths:
        stored = []
        for r in levels:
            shape = (n_paths, r * macro_steps + 1) if scalar else (
                n_paths, r * macro_steps + 1, model.dim)
            arr = np.empty(shape)
            arr[:, 0] = x0
            stored.append(arr)

    if scalar:
        run_grid_max = [np.full(n_paths, x0) for _ in levels]
        run_grid_min = [np.full(n_paths, x0) for _ in levels]
    else:
        run_grid_max = run_grid_min = None
    run_max = [np.full(n_paths, x0) for _ in levels] if bridged else None
    run_min = [np.full(n_paths, x0) for _ in levels] if bridged else None

    sqrt_macro = math.sqrt(horizon / macro_steps)
    sqrt_lengths = schedule.sqrt_lengths()
    starts = [schedule.level_starts(r) for r in levels]
    q = model.noise_dim

    for j in range(macro_steps):
        if coupling == "consistent":
            if scalar:
                xi = gauss.standard_normal((n_paths, schedule.atom_count))
            else:
                xi = gauss.standard_normal((n_paths, schedule.atom_count, q))
            scaled = xi * (sqrt_lengths[:, None] if not scalar else sqrt_lengths)
            blocks = [sqrt_macro * np.add.reduceat(scaled, starts[i], axis=1)
                      for i in range(order)]
        else:
            blocks = []
            for r in levels:
                shape = (n_paths, r) if scalar else (n_paths, r, q)
                z = gauss.standard_normal(shape)
                blocks.append(math.sqrt(horizon / (r * macro_steps)) * z)

        for i, r in enumerate(levels):
            dt = horizon / (r * macro_steps)
            dW = blocks[i]
            for k in range(r):
                t = (j * r + k) * dt
                x = cur[i]
                drift = model.drift(t, x)
                sig = model.diffusion(t, x)
                if scalar:
                    y = x + drift * dt + sig * dW[:, k]
                else:
                    y = x + np.asarray(drift) * dt + np.einsum(
                        "pdq,pq->pd", np.asarray(sig), dW[:, k])
                if not np.all(np.isfinite(y)):
                    bad = int(np.size(y) - np.isfinite(y).sum())
                    raise BlowUpError(time=t + dt, bad_paths=bad, level=r)
                if keep_paths:
                    stored[i][:, j * r + k + 1] = y
                if scalar:
                    np.maximum(run_grid_max[i], y, out=run_grid_max[i])
                    np.minimum(run_grid_min[i], y, out=run_grid_min[i])
                if bridged:
                    # map [0,1) draws to (0,1] so the log never diverges
                    u_hi = 1.0 - bridge_gens[i].random(n_paths)
                    u_lo = 1.0 - bridge_gens[i].random(n_paths)
                    var_dt = 2.0 * dt * sig * sig
                    hi = 0.5 * (x + y + np.sqrt((y - x) ** 2 - var_dt * np.log(u_hi)))
                    lo = 0.5 * (x + y - np.sqrt((y - x) ** 2 - var_dt * np.log(u_lo)))
                    np.maximum(run_max[i], hi, out=run_max[i])
                    np.minimum(run_min[i], lo, out=run_min[i])
                cur[i] = y

    return CoupledPathBundle(
        order=order,
        macro_steps=macro_steps,
        horizon=horizon,
        coupling=coupling,
        bridged=bridged,
        terminals=tuple(cur),
        grid_max=tuple(run_grid_max) if scalar else tuple(None for _ in levels),
        grid_min=tuple(run_grid_min) if scalar else tuple(None for _ in levels),
        sampled_max=tuple(run_max) if bridged else None,
        sampled_min=tuple(run_min) if bridged else None,
        paths=tuple(stored) if keep_paths else None,
    )
