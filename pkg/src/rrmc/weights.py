"""Extrapolation weights for multi-step Richardson-Romberg estimators.

A combination sum_r alpha_r * E_r of estimates computed at step ratios
x_1, ..., x_R reproduces the x -> 0 limit of any weak-error expansion

    E(x) = mu + a_1 * x + a_2 * x^2 + ... + a_{R-1} * x^{R-1} + O(x^R)

exactly through order R-1 iff the weights solve the Vandermonde system

    sum_r alpha_r * x_r^(l-1) = delta_{l,1},   l = 1..R.

The solution is the Lagrange interpolation basis evaluated at zero,

    alpha_r = prod_{j != r} (-x_j) / (x_r - x_j),

which avoids the notorious ill-conditioning of a numerical Vandermonde
solve and is exact in rational arithmetic when the nodes are rational.

Two built-in error scales cover the schemes of interest:

* integer scale (nodes 1/r): first-order weak error expanding in powers
  of the step, the usual case for smooth terminal payoffs;
* half-order scale (nodes 1/sqrt(r)): expansions in powers of the square
  root of the step, conjectured for path-dependent payoffs of the
  stepwise constant scheme.

Integer-scale weights are kept as exact `fractions.Fraction` values so
golden identities hold exactly; half-order weights involve surds and are
double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Sequence, Union

Weight = Union[Fraction, float]

#: Largest order supported by the closed-form constructors.  Weights grow
#: roughly like e^R and the factorials in the closed forms overflow naive
#: arithmetic well before float64 stops being meaningful.
MAX_ORDER = 20


@dataclass(frozen=True)
class ErrorScale:
    """Exponent ladder gamma_1 < gamma_2 < ... of a weak-error expansion.

    ``kind`` is one of ``"integer"`` (gamma_l = l), ``"half-order"``
    (gamma_l = l/2) or ``"custom"`` with an explicit exponent tuple.
    """

    kind: str
    custom_exponents: tuple = ()

    def __post_init__(self):
        if self.kind not in ("integer", "half-order", "custom"):
            raise ValueError(f"unknown error scale kind: {self.kind!r}")
        if self.kind == "custom":
            exps = tuple(float(g) for g in self.custom_exponents)
            if not exps:
                raise ValueError("custom scale needs at least one exponent")
            if any(g <= 0 for g in exps):
                raise ValueError("scale exponents must be positive")
            if any(b <= a for a, b in zip(exps, exps[1:])):
                raise ValueError("scale exponents must be strictly increasing")
            object.__setattr__(self, "custom_exponents", exps)

    @classmethod
    def custom(cls, exponents: Sequence[float]) -> "ErrorScale":
        return cls("custom", tuple(exponents))

    def exponents(self, order: int) -> tuple:
        """Ladder gamma_1..gamma_{order-1} used by an order-`order` combination."""
        if order < 1:
            raise ValueError("order must be >= 1")
        if self.kind == "integer":
            return tuple(range(1, order))
        if self.kind == "half-order":
            return tuple(Fraction(ell, 2) for ell in range(1, order))
        if order - 1 > len(self.custom_exponents):
            raise ValueError(
                f"custom scale has {len(self.custom_exponents)} exponents, "
                f"order {order} needs {order - 1}"
            )
        return self.custom_exponents[: order - 1]

    def ladder_step(self, order: int) -> float:
        """Common spacing s with gamma_l = l*s, or raise if the ladder is not uniform.

        Only uniform ladders reduce to a plain Vandermonde system in the
        nodes (1/r)^s; anything else is out of scope here.
        """
        exps = self.exponents(order)
        if not exps:  # order 1: any scale works, spacing irrelevant
            return 1.0
        step = exps[0]
        for ell, g in enumerate(exps, start=1):
            if abs(float(g) - ell * float(step)) > 1e-12:
                raise ValueError(
                    "scale exponents are not a uniform ladder; "
                    "solve_weights with explicit nodes instead"
                )
        return step

    def nodes(self, order: int) -> tuple:
        """Solver nodes x_r = (1/r)^s for levels r = 1..order."""
        s = self.ladder_step(order)
        if self.kind == "integer" or s == 1:
            return tuple(Fraction(1, r) for r in range(1, order + 1))
        if float(s) == 0.5:
            return tuple(1.0 / math.sqrt(r) for r in range(1, order + 1))
        return tuple((1.0 / r) ** float(s) for r in range(1, order + 1))


INTEGER = ErrorScale("integer")
HALF_ORDER = ErrorScale("half-order")


def float_tolerance(weights: Sequence[Weight]) -> float:
    """Absolute tolerance for identities among float weights.

    Half-order weights reach ~1e5 before order 10, so the representation
    rounding of the weights themselves caps achievable accuracy; the
    identities hold to a few ulps of the total weight mass.
    """
    mass = sum(abs(float(w)) for w in weights)
    return max(1e-12, 8e-15 * mass)


@dataclass(frozen=True)
class WeightVector:
    """Weights alpha_1..alpha_R with the nodes they were solved at."""

    order: int
    scale: ErrorScale
    weights: tuple
    nodes: tuple

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if len(self.weights) != self.order or len(self.nodes) != self.order:
            raise ValueError("weights and nodes must have length `order`")
        total = sum(self.weights)
        if self._rational:
            if total != 1:
                raise ValueError(f"weights sum to {total}, expected exactly 1")
        elif abs(total - 1.0) > float_tolerance(self.weights):
            raise ValueError(f"weights sum to {total!r}, expected 1")

    @property
    def _rational(self) -> bool:
        return all(isinstance(w, Rational) for w in self.weights)

    @property
    def exact(self) -> bool:
        """True when the weights are exact rationals."""
        return self._rational

    def as_floats(self) -> tuple:
        return tuple(float(w) for w in self.weights)

    def weight_sum(self) -> Weight:
        return sum(self.weights)

    def cancellation_residuals(self) -> tuple:
        """sum_r alpha_r * x_r^l for l = 1..order-1 (zero for valid weights)."""
        out = []
        for ell in range(1, self.order):
            out.append(sum(a * x ** ell for a, x in zip(self.weights, self.nodes)))
        return tuple(out)

    def combine(self, level_values: Sequence[float]) -> float:
        """Weighted combination sum_r alpha_r * value_r."""
        if len(level_values) != self.order:
            raise ValueError("need one value per level")
        return sum(float(a) * v for a, v in zip(self.weights, level_values))


def solve_weights(order: int, nodes: Sequence[Weight]) -> WeightVector:
    """Solve the Vandermonde system for arbitrary distinct positive nodes.

    Returns alpha with sum_r alpha_r * nodes_r^(l-1) = delta_{l,1} for
    l = 1..order, computed by the Lagrange-at-zero product.  Exact when
    every node is rational, double precision otherwise.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    nodes = tuple(nodes)
    if len(nodes) != order:
        raise ValueError(f"expected {order} nodes, got {len(nodes)}")
    if any(float(x) <= 0 for x in nodes):
        raise ValueError("nodes must be positive")

    rational = all(isinstance(x, Rational) for x in nodes)
    xs = [Fraction(x) for x in nodes] if rational else [float(x) for x in nodes]
    if len(set(xs)) != order:
        raise ValueError("degenerate Vandermonde: duplicate nodes")
    weights = []
    for r, xr in enumerate(xs):
        w = Fraction(1) if rational else 1.0
        for j, xj in enumerate(xs):
            if j != r:
                w *= (-xj) / (xr - xj)
        weights.append(w)
    scale = _infer_scale(order, xs, rational)
    return WeightVector(order=order, scale=scale, weights=tuple(weights), nodes=tuple(xs))


def _infer_scale(order, xs, rational):
    if rational and xs == [Fraction(1, r) for r in range(1, order + 1)]:
        return INTEGER
    if not rational and all(
        abs(x - 1.0 / math.sqrt(r)) <= 1e-15 for r, x in enumerate(xs, start=1)
    ):
        return HALF_ORDER
    if order == 1:
        return INTEGER
    # Bespoke nodes: the cancellation conditions are the plain monomial
    # ladder in the node variable, which is what custom records here.
    return ErrorScale.custom(tuple(range(1, order)))


def standard_weights(order: int) -> WeightVector:
    """Closed-form integer-scale weights, exact rationals.

    alpha_r = (-1)^(R-r) * r^R / (r! * (R-r)!), the solution of the
    Vandermonde system at nodes 1/r.
    """
    _check_order(order)
    weights = tuple(
        Fraction((-1) ** (order - r) * r ** order,
                 math.factorial(r) * math.factorial(order - r))
        for r in range(1, order + 1)
    )
    nodes = tuple(Fraction(1, r) for r in range(1, order + 1))
    return WeightVector(order=order, scale=INTEGER, weights=weights, nodes=nodes)


def half_order_weights(order: int) -> WeightVector:
    """Closed-form half-order weights (double precision).

    alpha_r = (-1)^(R-r)/2 * r^R / (r!(R-r)!) * prod_{k=1..R} (1 + sqrt(k/r)),
    the solution of the Vandermonde system at nodes 1/sqrt(r).
    """
    _check_order(order)
    weights = []
    for r in range(1, order + 1):
        base = Fraction((-1) ** (order - r) * r ** order,
                        2 * math.factorial(r) * math.factorial(order - r))
        prod = 1.0
        for k in range(1, order + 1):
            prod *= 1.0 + math.sqrt(k / r)
        weights.append(float(base) * prod)
    nodes = tuple(1.0 / math.sqrt(r) for r in range(1, order + 1))
    return WeightVector(order=order, scale=HALF_ORDER, weights=tuple(weights), nodes=nodes)


def weights_for_scale(order: int, scale: ErrorScale) -> WeightVector:
    """Weight vector for one of the ladder scales at the given order."""
    if scale.kind == "integer":
        return standard_weights(order)
    if scale.kind == "half-order":
        return half_order_weights(order)
    wv = solve_weights(order, scale.nodes(order))
    return WeightVector(order=order, scale=scale, weights=wv.weights, nodes=wv.nodes)


def leading_coefficient_factor(order: int) -> Fraction:
    """sum_r alpha_r / r^R for the integer scale; equals (-1)^(R-1)/R!.

    The residual bias of the order-R combination is this factor times the
    R-th expansion coefficient, so the combination damps rather than
    amplifies the first surviving term.
    """
    wv = standard_weights(order)
    return sum(a * Fraction(1, r ** order) for a, r in zip(wv.weights, range(1, order + 1)))


def sum_of_squares(wv: WeightVector) -> Weight:
    """sum_r alpha_r^2, the variance inflation factor under independent coupling."""
    return sum(a * a for a in wv.weights)


def _check_order(order: int) -> None:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {order}")
