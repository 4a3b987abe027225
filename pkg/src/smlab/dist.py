"""Finite distributions on R^n, couplings, information functionals and type classes."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    ConfigError,
    DimensionMismatch,
    EnumerationTooLarge,
)

PROB_TOL = 1e-12
# inputs are accepted if they sum to 1 within this slack and then renormalized
_INPUT_SLACK = 1e-9
DEFAULT_ENUM_CAP = 10**7


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _xlogy_sum(p: np.ndarray, q: np.ndarray) -> float:
    """Sum of p*ln(p/q) with the 0*ln(0/q) = 0 convention."""
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability weights on a finite set of distinct points in R^n.

    ``points`` has shape (k, n). Duplicate atoms are merged (probabilities
    summed) keeping the order of first appearance, so atom indices are stable.
    """

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise DimensionMismatch("points must be a (k, n) array")
        pr = np.asarray(self.probs, dtype=float).ravel()
        if pr.shape[0] != pts.shape[0]:
            raise DimensionMismatch(
                f"{pts.shape[0]} atoms but {pr.shape[0]} probabilities")
        if pts.shape[0] == 0:
            raise ValueError("distribution needs at least one atom")
        if not np.all(np.isfinite(pts)):
            raise ValueError("atoms must be finite")
        if np.any(pr < 0) or not np.all(np.isfinite(pr)):
            raise ValueError("probabilities must be finite and nonnegative")
        total = pr.sum()
        if abs(total - 1.0) > _INPUT_SLACK:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

        uniq, first, inverse = np.unique(
            pts, axis=0, return_index=True, return_inverse=True)
        if uniq.shape[0] != pts.shape[0]:
            order = np.argsort(first)
            rank = np.empty_like(order)
            rank[order] = np.arange(order.size)
            merged = np.zeros(uniq.shape[0])
            np.add.at(merged, rank[inverse.ravel()], pr)
            pts, pr = uniq[order], merged

        object.__setattr__(self, "points", _readonly(np.array(pts)))
        object.__setattr__(self, "probs", _readonly(pr / pr.sum()))

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def second_moment(self) -> float:
        """E||X||^2."""
        return float(self.probs @ np.sum(self.points**2, axis=1))

    def atoms_1d(self) -> np.ndarray:
        if self.n != 1:
            raise DimensionMismatch("distribution is not on the real line")
        return self.points[:, 0]

    def same_atoms(self, other: DiscreteDistribution) -> bool:
        return (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points))

    def __repr__(self) -> str:
        return f"DiscreteDistribution(size={self.size}, n={self.n})"

    # constructors

    @classmethod
    def point_mass(cls, z: Sequence[float] | float) -> DiscreteDistribution:
        return cls(np.atleast_1d(np.asarray(z, dtype=float))[None, :], [1.0])

    @classmethod
    def rademacher(cls, dim: int = 1) -> DiscreteDistribution:
        """Uniform law on the cube {-1, +1}^dim."""
        pts = np.array(list(itertools.product((1.0, -1.0), repeat=dim)))
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @classmethod
    def finite(cls, atoms, probs) -> DiscreteDistribution:
        return cls(np.asarray(atoms, dtype=float), np.asarray(probs, dtype=float))


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint law of (row atom, column atom) with prescribed marginals."""

    row_dist: DiscreteDistribution
    col_dist: DiscreteDistribution
    matrix: np.ndarray
    marginal_tol: float = 1e-9

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (self.row_dist.size, self.col_dist.size):
            raise DimensionMismatch(
                f"matrix shape {m.shape} does not match supports "
                f"({self.row_dist.size}, {self.col_dist.size})")
        if np.any(m < 0):
            if m.min() < -PROB_TOL:
                raise ValueError("coupling has negative entries")
            m = np.clip(m, 0.0, None)
        if abs(m.sum() - 1.0) > _INPUT_SLACK:
            raise ValueError(f"coupling sums to {m.sum()!r}")
        m /= m.sum()
        object.__setattr__(self, "matrix", _readonly(m))
        if self.marginal_residual() > self.marginal_tol:
            raise ValueError(
                f"marginal residual {self.marginal_residual():.3e} exceeds "
                f"{self.marginal_tol:.1e}")

    def marginal_residual(self) -> float:
        """L1 distance of the row and column sums from the prescribed marginals."""
        r = np.abs(self.matrix.sum(axis=1) - self.row_dist.probs).sum()
        c = np.abs(self.matrix.sum(axis=0) - self.col_dist.probs).sum()
        return float(max(r, c))

    def product_matrix(self) -> np.ndarray:
        return np.outer(self.row_dist.probs, self.col_dist.probs)

    def mutual_information(self) -> float:
        return mutual_information(self)

    def expected(self, cost: np.ndarray) -> float:
        return float(np.sum(self.matrix * cost))

    def inner_product_cost(self) -> np.ndarray:
        return self.row_dist.points @ self.col_dist.points.T

    @classmethod
    def product(cls, p: DiscreteDistribution, q: DiscreteDistribution) -> Coupling:
        return cls(p, q, np.outer(p.probs, q.probs))

    @classmethod
    def diagonal(cls, p: DiscreteDistribution) -> Coupling:
        return cls(p, p, np.diag(p.probs))


def entropy(p: DiscreteDistribution) -> float:
    """Shannon entropy in nats."""
    pr = p.probs[p.probs > 0]
    return float(-np.sum(pr * np.log(pr)))


def kl_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    if not p.same_atoms(q):
        raise DimensionMismatch("kl_divergence needs both laws on the same atoms")
    return kl_arrays(p.probs, q.probs)


def kl_arrays(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p||q) for probability arrays of equal shape."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if np.any((q <= 0) & (p > 0)):
        raise AbsoluteContinuityViolation("p puts mass where q has none")
    return max(_xlogy_sum(p, q), 0.0)


def mutual_information(c: Coupling) -> float:
    """I = KL(coupling || product of its marginals), in nats."""
    m = c.matrix
    return kl_arrays(m, np.outer(m.sum(axis=1), m.sum(axis=0)))


# type classes


def largest_remainder_counts(probs: Sequence[float], length: int) -> np.ndarray:
    """Integer counts summing to ``length`` closest to ``length * probs``.

    Floors first, then hands the leftover units to the largest fractional
    parts; ties go to the lower atom index.
    """
    probs = np.asarray(probs, dtype=float)
    raw = probs * length
    counts = np.floor(raw + 1e-12).astype(np.int64)
    frac = raw - counts
    short = length - int(counts.sum())
    # stable sort on -frac keeps index order among ties
    for i in np.argsort(-frac, kind="stable")[:short]:
        counts[i] += 1
    return counts


@dataclass(frozen=True, eq=False)
class TypeClassSpec:
    base: DiscreteDistribution
    length: int
    counts: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("type class length must be positive")
        counts = self.counts or tuple(
            int(c) for c in largest_remainder_counts(self.base.probs, self.length))
        if len(counts) != self.base.size:
            raise DimensionMismatch("one count per atom required")
        if any(c < 0 for c in counts) or sum(counts) != self.length:
            raise ValueError(f"counts {counts} do not sum to {self.length}")
        object.__setattr__(self, "counts", tuple(int(c) for c in counts))

    @property
    def size(self) -> int:
        """Number of sequences in the class (exact integer)."""
        return multinomial(self.counts)

    def empirical(self) -> DiscreteDistribution:
        """The type itself, as a distribution on the base atoms."""
        return DiscreteDistribution(
            self.base.points, np.asarray(self.counts, dtype=float) / self.length)


def multinomial(counts: Sequence[int]) -> int:
    total = 0
    result = 1
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def _multiset_permutations(seq: list[int]) -> Iterator[tuple[int, ...]]:
    # lexicographic successor on a sorted multiset; each arrangement once
    a = sorted(seq)
    n = len(a)
    while True:
        yield tuple(a)
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1:] = reversed(a[i + 1:])


def type_class_enumerate(spec: TypeClassSpec,
                         cap: int = DEFAULT_ENUM_CAP) -> Iterator[tuple[int, ...]]:
    """Iterate over all atom-index sequences with the occupation counts of ``spec``.

    Raises EnumerationTooLarge up front when the class has more than ``cap``
    members; ``spec.size`` gives the exact count without enumerating.
    """
    if spec.size > cap:
        raise EnumerationTooLarge(
            f"type class has {spec.size} sequences (cap {cap})")
    seq = [i for i, c in enumerate(spec.counts) for _ in range(c)]
    return _multiset_permutations(seq)


def type_class_vectors(spec: TypeClassSpec, cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
    """All members of a type class over a 1-D base, one row per sequence."""
    atoms = spec.base.atoms_1d()
    idx = np.array(list(type_class_enumerate(spec, cap)), dtype=np.int64)
    return atoms[idx]


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def type_class_sample(base: DiscreteDistribution, n: int, seed) -> np.ndarray:
    """Uniform draw from the (rounded) type class of ``base`` at length ``n``."""
    atoms = base.atoms_1d()
    if n < base.size:
        raise ValueError(f"length {n} is shorter than the alphabet ({base.size})")
    counts = largest_remainder_counts(base.probs, n)
    return _as_rng(seed).permutation(np.repeat(atoms, counts))


def discretize_gaussian(dim: int, points_per_axis: int,
                        half_width: float) -> DiscreteDistribution:
    """Tensor grid approximating N(0, I_dim).

    Each axis carries ``points_per_axis`` equispaced nodes on
    [-half_width, half_width] with weights proportional to the normal density,
    renormalized to sum to one.
    """
    if points_per_axis < 3 or points_per_axis % 2 == 0:
        raise ValueError("points_per_axis must be odd and >= 3")
    if dim < 1 or half_width <= 0:
        raise ValueError("dim must be >= 1 and half_width > 0")
    x = np.linspace(-half_width, half_width, points_per_axis)
    x[points_per_axis // 2] = 0.0
    w = np.exp(-0.5 * x**2)
    w /= w.sum()
    if dim == 1:
        return DiscreteDistribution(x[:, None], w)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.ones(1)
    for _ in range(dim):
        wgrid = np.outer(wgrid, w).ravel()
    return DiscreteDistribution(pts, wgrid)


def distribution_from_json(spec: dict) -> DiscreteDistribution:
    """Build a distribution from its JSON description.

    Accepted forms::

        {"kind": "rademacher"}                      # optional "dim"
        {"kind": "finite", "atoms": [[..], ..], "probs": [..]}
        {"kind": "gaussian_grid", "dim": n, "points": k, "half_width": w}
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"distribution spec needs a 'kind': {spec!r}")
    kind = spec["kind"]
    try:
        if kind == "rademacher":
            return DiscreteDistribution.rademacher(int(spec.get("dim", 1)))
        if kind == "finite":
            return DiscreteDistribution.finite(spec["atoms"], spec["probs"])
        if kind == "gaussian_grid":
            return discretize_gaussian(int(spec["dim"]), int(spec["points"]),
                                       float(spec["half_width"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind!r} distribution spec: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")
