"""Random energy model and spiked-tensor free energies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtri

from .coupling import compute_I_eps
from .dist import (
    DEFAULT_ENUM_CAP,
    DiscreteDistribution,
    TypeClassSpec,
    entropy,
    type_class_sample,
    type_class_vectors,
)
from .errors import CapExceeded, DomainError
from .softmax import EstimateWithError, trial_generators

TENSOR_CAP = 10**6
REM_MC_MAX_M = 30
# above this many levels rem_mc switches to the stratified sampler by default
REM_EXACT_LIMIT = 2**20
_REM_TAIL = 2**15


@dataclass(frozen=True, eq=False)
class SpikedTensorModel:
    n: int
    d: int
    lam: float
    px: DiscreteDistribution
    cap: int = TENSOR_CAP

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise DomainError("n and d must be positive")
        if self.lam < 0:
            raise DomainError("lambda must be nonnegative")
        if self.px.n != 1:
            raise DomainError("P_X must live on the real line")

    @property
    def type_spec(self) -> TypeClassSpec:
        return TypeClassSpec(self.px, self.n)

    def check_cap(self) -> None:
        if self.n**self.d > self.cap:
            raise CapExceeded(f"n^d = {self.n**self.d} exceeds cap {self.cap}")

    def spins(self, enum_cap: int = DEFAULT_ENUM_CAP) -> np.ndarray:
        """All vectors X with sqrt(n) X in the type class, one per row."""
        return type_class_vectors(self.type_spec, enum_cap) / math.sqrt(self.n)

    def spin_norm_sq(self) -> float:
        """|X|^2, the same for every member of the type class."""
        counts = np.asarray(self.type_spec.counts, dtype=float)
        return float(counts @ self.px.atoms_1d() ** 2 / self.n)

    def sample_spin(self, rng) -> np.ndarray:
        return type_class_sample(self.px, self.n, rng) / math.sqrt(self.n)


@dataclass(frozen=True)
class RemSpec:
    M: int
    beta: float

    def __post_init__(self):
        if self.M < 1:
            raise DomainError("M must be >= 1")
        if self.beta < 0:
            raise DomainError("beta must be nonnegative")


def rem_free_energy(beta: float) -> float:
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    crit = 2.0 * math.sqrt(math.log(2.0))
    if beta < crit:
        return 0.25 * beta * beta + math.log(2.0)
    return beta * math.sqrt(math.log(2.0))


def _rem_log_z_exact(rng, M: int, a: float) -> float:
    g = rng.standard_normal(2**M)
    return float(logsumexp(a * g))


def _rem_log_z_stratified(rng, M: int, a: float) -> float:
    """ln sum_j exp(a g_j) over 2^M iid standard normals.

    Levels above the threshold t0 (expected count _REM_TAIL) are drawn
    exactly: their number is binomial and their values come from the inverse
    tail CDF. The remaining sum is replaced by a normal variable with the exact
    conditional mean and variance of the truncated lognormal terms; with
    millions of bounded summands this is accurate far below MC error.
    """
    N = 2**M
    p_tail = _REM_TAIL / N
    t0 = -float(ndtri(p_tail))
    count = int(rng.binomial(N, p_tail))
    u = rng.random(count)
    tail = -ndtri(u * p_tail)
    log_tail = float(logsumexp(a * tail)) if count else -math.inf

    n_low = N - count
    log_phi_t0 = float(log_ndtr(t0))
    log_m1 = 0.5 * a * a + float(log_ndtr(t0 - a)) - log_phi_t0
    log_m2 = 2.0 * a * a + float(log_ndtr(t0 - 2 * a)) - log_phi_t0
    # var / mean^2 of one bulk term
    rel_var = math.expm1(log_m2 - 2 * log_m1) if log_m2 - 2 * log_m1 > 0 else 0.0
    rel_sd_sum = math.sqrt(rel_var / n_low)
    if rel_sd_sum > 0.05:
        # bulk too heavy-tailed for the normal replacement
        return _rem_log_z_exact(rng, M, a)
    factor = 1.0 + rel_sd_sum * rng.standard_normal()
    log_low = math.log(n_low) + log_m1 + math.log(max(factor, 1e-12))
    return float(np.logaddexp(log_low, log_tail))


def rem_mc(spec: RemSpec, trials: int, seed: int, method: str = "auto") -> EstimateWithError:
    """MC estimate of (1/M) E ln sum_{j <= 2^M} exp(-beta E_j), E_j ~ N(0, M/2).

    ``method`` is "exact" (all 2^M levels drawn), "stratified" or "auto"
    (exact up to 2^20 levels).
    """
    if spec.M > REM_MC_MAX_M:
        raise CapExceeded(f"M={spec.M} exceeds {REM_MC_MAX_M}")
    if method == "auto":
        method = "exact" if 2**spec.M <= REM_EXACT_LIMIT else "stratified"
    if method not in ("exact", "stratified"):
        raise ValueError(f"unknown method {method!r}")
    if spec.beta == 0.0:
        return EstimateWithError(math.log(2.0), 0.0, trials, seed)
    # -beta E_j has the law of a g_j with g_j standard normal
    a = spec.beta * math.sqrt(spec.M / 2.0)
    draw = _rem_log_z_exact if method == "exact" else _rem_log_z_stratified
    vals = [draw(g, spec.M, a) / spec.M for g in trial_generators(seed, trials)]
    return EstimateWithError.from_samples(vals, seed)


def rank1_inner(x, xbar, d: int) -> float:
    """<x^{(x)d}, xbar^{(x)d}> = <x, xbar>^d, without forming tensors."""
    x = np.asarray(x, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    if x.shape != xbar.shape:
        raise ValueError("x and xbar must have equal dimension")
    return float(np.dot(x, xbar) ** d)


def tensor_contract(t: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """<t, v^{(x)d}> for every row v of ``vs`` (t has d axes of length n)."""
    vs = np.atleast_2d(vs)
    # first contraction keeps a batch axis; later ones reduce it
    out = np.tensordot(vs, t, axes=([1], [t.ndim - 1]))
    for _ in range(t.ndim - 1):
        out = np.einsum("b...i,bi->b...", out, vs)
    return out


def outer_power(x: np.ndarray, d: int) -> np.ndarray:
    t = np.asarray(x, dtype=float)
    for _ in range(d - 1):
        t = np.multiply.outer(t, x)
    return t


def _parse_inner(inner):
    if inner in (None, "exact"):
        return None
    if isinstance(inner, int):
        return inner
    if isinstance(inner, str) and inner.startswith("mc"):
        return int(inner.split(":", 1)[1] if ":" in inner else inner[3:-1])
    raise ValueError(f"inner must be 'exact' or 'mc:<k>', got {inner!r}")


def free_energy_mc(m: SpikedTensorModel, g_trials: int, seed: int,
                   inner="exact", enum_cap: int = DEFAULT_ENUM_CAP) -> EstimateWithError:
    """(1/n) E_G ln E_X exp(sqrt(n/2) lam <G, X^{(x)d}>), G standard Gaussian.

    X is uniform over vectors with sqrt(n) X in the (rounded) P_X type class,
    so |X|^2 equals the type's second moment. ``inner`` is "exact" (sum over
    the whole class) or "mc:<k>" (k fresh spin samples per G).
    """
    m.check_cap()
    k = _parse_inner(inner)
    coef = math.sqrt(m.n / 2.0) * m.lam
    spins = m.spins(enum_cap) if k is None else None
    vals = []
    for rng in trial_generators(seed, g_trials):
        G = rng.standard_normal((m.n,) * m.d)
        xs = spins if k is None else np.array([m.sample_spin(rng) for _ in range(k)])
        vals.append(float(logsumexp(coef * tensor_contract(G, xs)) - math.log(len(xs))) / m.n)
    return EstimateWithError.from_samples(vals, seed)


def annealed_bound(m: SpikedTensorModel) -> float:
    """(1/n) ln E_{G,X} exp(...) = lam^2 |X|^{2d} / 4; lam^2/4 for unit-variance types."""
    return 0.25 * m.lam**2 * m.spin_norm_sq() ** m.d


def default_eps_grid(px: DiscreteDistribution, d: int, num: int = 32) -> np.ndarray:
    """Geometric grid from 0.05 up to (not including) sqrt(2 (E X^2)^d)."""
    top = math.sqrt(2.0 * px.second_moment() ** d)
    return np.geomspace(0.05, top, num + 1)[:-1]


def thm4_value(lam: float, eps: float, i_eps: float) -> float:
    """Piecewise lower-bound term for one eps."""
    if lam * lam * eps * eps < 8.0 * i_eps:
        return lam * lam * eps * eps / 8.0
    return lam * eps * math.sqrt(0.5 * i_eps) - i_eps


def thm4_lower_bound(m: SpikedTensorModel, eps_grid: Sequence[float] | None = None) -> float:
    """sup over eps in the grid of the free-energy lower bound built from I_eps."""
    grid = default_eps_grid(m.px, m.d) if eps_grid is None else np.asarray(eps_grid, float)
    if grid.size == 0:
        raise ValueError("eps grid must be nonempty")
    return max(thm4_value(m.lam, float(e), compute_I_eps(m.px, m.d, float(e))) for e in grid)


def cor6_limit(lam: float, H: float) -> float:
    """lam^2/4 below lam = 2 sqrt(H), lam sqrt(H) - H above."""
    if lam < 0 or H < 0:
        raise DomainError("lambda and H must be nonnegative")
    if lam < 2.0 * math.sqrt(H):
        return 0.25 * lam * lam
    return lam * math.sqrt(H) - H


def finite_n_slack(n: int) -> float:
    return 0.1 + 2.0 / math.sqrt(n)


def px_entropy(m: SpikedTensorModel) -> float:
    return entropy(m.px)
