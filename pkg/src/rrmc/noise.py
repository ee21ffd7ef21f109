"""Consistent Gaussian increments for coupled Euler schemes.

All refinement levels r = 1..R are driven by one underlying Brownian
path.  Per macro step the levels need the triangular array of increments
W(l/r) - W((l-1)/r) (macro step rescaled to [0, 1]); every boundary l/r
is a reduced fraction, so the minimal construction draws one standard
normal per *atom* -- the gap between consecutive points of the Farey set

    S_R = { l/r : 1 <= l <= r <= R, gcd(l, r) = 1 }

-- scales it by sqrt(atom length), and aggregates atoms into each level's
increments.  card(S_R) = sum_{r<=R} phi(r) variates per macro step.  The
alternative "lazy" schedule uses lcm(1..R) uniform atoms with m(r) =
lcm/r atoms per level increment; both schedules produce identically
distributed blocks.

Every level increment is normalized to unit variance: U, not dW.  A
level's fine increment over a span of atoms with lengths lambda_i is

    U = sqrt(r) * sum_i sqrt(lambda_i) * xi_i,      xi_i iid N(0, I_q),

so summing a level's normalized increments scaled back by 1/sqrt(r)
reconstructs the same macro Brownian increment at every level (the
consistency invariant, exact up to float rounding).

Randomness contract: a `RandomSource` is a (seed, stream) pair keying a
Philox4x64 counter-based bit generator directly; normal variates come
from numpy's ziggurat (`Generator.standard_normal`) and uniforms from
`Generator.random`.  Identical (seed, stream) reproduces identical
variates bit-for-bit on a fixed numpy version; distinct streams are
independent.  Substreams are derived by hashing string/int labels.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_stream(*labels) -> int:
    """Deterministic 64-bit substream index from arbitrary labels.

    SHA-256 over the '/'-joined decimal/string labels; stable across
    runs, platforms and Python versions.
    """
    text = "/".join(str(p) for p in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RandomSource:
    """Seedable, substreamed randomness handle.

    (seed, stream) keys the Philox generator directly, so equal pairs
    replay the identical variate sequence and distinct pairs give
    statistically independent streams.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, *labels) -> "RandomSource":
        """New source whose stream mixes this stream with the labels."""
        return RandomSource(self.seed, derive_stream(self.stream, *labels))


RngLike = Union[RandomSource, np.random.Generator]


def _as_generator(rng: RngLike) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RandomSource) else rng


def totient_cardinality(order: int) -> int:
    """card(S_R) = sum of Euler totients phi(1) + ... + phi(order)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return sum(
        sum(1 for ell in range(1, r + 1) if math.gcd(ell, r) == 1)
        for r in range(1, order + 1)
    )


def lcm_atoms(order: int) -> int:
    """lcm(1..order): variates per macro step of the lazy schedule."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return math.lcm(*range(1, order + 1))


@dataclass(frozen=True)
class IncrementSchedule:
    """Per-macro-step plan for one consistent block serving all levels.

    breakpoints: right endpoints of the atoms, ascending rationals in
        (0, 1]; the atoms partition (0, 1] exactly.
    subinterval_lengths: atom lengths as exact rationals summing to 1.
    level_maps: for each level r, the atom index at which each of its r
        fine increments starts (fine increment k spans atoms
        level_maps[r-1][k] .. level_maps[r-1][k+1]-1).
    """

    order: int
    kind: str
    breakpoints: tuple
    subinterval_lengths: tuple
    level_maps: tuple

    @property
    def atom_count(self) -> int:
        return len(self.subinterval_lengths)

    def sqrt_lengths(self) -> np.ndarray:
        return np.sqrt(np.array([float(x) for x in self.subinterval_lengths]))

    def level_starts(self, level: int) -> np.ndarray:
        if not 1 <= level <= self.order:
            raise ValueError(f"level must be in 1..{self.order}")
        return np.asarray(self.level_maps[level - 1], dtype=np.intp)


def build_schedule(order: int, kind: str = "sparing") -> IncrementSchedule:
    """Atom schedule for one macro step, either minimal or lcm-uniform.

    "sparing" draws card(S_R) variates per macro step (the Farey atoms),
    "lazy" draws lcm(1..R).
    """
    if not 1 <= order <= 20:
        raise ValueError(f"order must be in 1..20, got {order}")
    if kind == "sparing":
        points = sorted({Fraction(ell, r) for r in range(1, order + 1)
                         for ell in range(1, r + 1)})
    elif kind == "lazy":
        m = lcm_atoms(order)
        points = [Fraction(i, m) for i in range(1, m + 1)]
    else:
        raise ValueError(f"unknown schedule kind: {kind!r}")

    lengths = tuple(b - a for a, b in zip([Fraction(0)] + points[:-1], points))
    assert sum(lengths) == 1

    index = {p: i for i, p in enumerate(points)}
    level_maps = []
    for r in range(1, order + 1):
        starts = [0] + [index[Fraction(k, r)] + 1 for k in range(1, r)]
        level_maps.append(tuple(starts))

    return IncrementSchedule(
        order=order,
        kind=kind,
        breakpoints=tuple(points),
        subinterval_lengths=lengths,
        level_maps=tuple(level_maps),
    )


@dataclass(frozen=True)
class IncrementBlock:
    """One macro step's normalized increments for every level.

    levels[r-1] has shape (r, q), or (size, r, q) for batched blocks;
    entry k is U_k = sqrt(r) * (B(k/r) - B((k-1)/r)) for the shared
    normalized Brownian path B (consistent sampling) or a fresh
    independent draw (independent sampling).
    """

    order: int
    q: int
    levels: tuple

    def level(self, r: int) -> np.ndarray:
        if not 1 <= r <= self.order:
            raise ValueError(f"level must be in 1..{self.order}")
        return self.levels[r - 1]

    def reconstructed_macro(self, r: int) -> np.ndarray:
        """B(1) rebuilt from level r: sum_k U_k / sqrt(r).

        Identical across levels for consistent blocks (to ~1e-12);
        differs across levels for independent blocks.
        """
        return self.level(r).sum(axis=-2) / math.sqrt(r)


def sample_block(schedule: IncrementSchedule, rng: RngLike, q: int = 1,
                 size: Optional[int] = None) -> IncrementBlock:
    """Draw one consistent block (or `size` of them) from the schedule.

    Consumes exactly atom_count * q standard normals per block.
    """
    gen = _as_generator(rng)
    n_atoms = schedule.atom_count
    shape = (n_atoms, q) if size is None else (size, n_atoms, q)
    atoms = gen.standard_normal(shape)
    scaled = atoms * schedule.sqrt_lengths()[..., :, None]
    levels = []
    for r in range(1, schedule.order + 1):
        spans = np.add.reduceat(scaled, schedule.level_starts(r), axis=-2)
        levels.append(spans * math.sqrt(r))
    return IncrementBlock(order=schedule.order, q=q, levels=tuple(levels))


def sample_independent_block(order: int, rng: RngLike, q: int = 1,
                             size: Optional[int] = None) -> IncrementBlock:
    """Block with fresh independent white noise per level (no coupling).

    Marginals match `sample_block` exactly (each level is iid standard
    normal); only the cross-level coupling is absent.  Consumes
    order*(order+1)/2 * q normals per block.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    gen = _as_generator(rng)
    levels = []
    for r in range(1, order + 1):
        shape = (r, q) if size is None else (size, r, q)
        levels.append(gen.standard_normal(shape))
    return IncrementBlock(order=order, q=q, levels=tuple(levels))


def overlap_oracle_matrix(order: int) -> np.ndarray:
    """Closed-form covariance of the flattened consistent block (q = 1).

    Cov(U^(r)_k, U^(r')_j) = sqrt(r r') * |span_k(r) overlap span_j(r')|
    on the normalized macro interval; rows/columns run over levels in
    order, fine index within level.
    """
    pairs = [(r, k) for r in range(1, order + 1) for k in range(1, r + 1)]
    m = np.empty((len(pairs), len(pairs)))
    for i, (r, k) in enumerate(pairs):
        for j, (s, l) in enumerate(pairs):
            lo = max(Fraction(k - 1, r), Fraction(l - 1, s))
            hi = min(Fraction(k, r), Fraction(l, s))
            ov = hi - lo if hi > lo else Fraction(0)
            m[i, j] = math.sqrt(r * s) * float(ov)
    return m


def block_component_labels(order: int) -> list:
    """(level, fine index) labels matching overlap_oracle_matrix rows."""
    return [(r, k) for r in range(1, order + 1) for k in range(1, r + 1)]


def empirical_block_covariance(schedule: IncrementSchedule, rng: RngLike,
                               samples: int, independent: bool = False) -> np.ndarray:
    """Sample covariance of the flattened block over `samples` draws (q = 1)."""
    if independent:
        block = sample_independent_block(schedule.order, rng, q=1, size=samples)
    else:
        block = sample_block(schedule, rng, q=1, size=samples)
    flat = np.concatenate([block.level(r)[..., 0] for r in range(1, schedule.order + 1)],
                          axis=1)
    return np.cov(flat, rowvar=False, ddof=1)
