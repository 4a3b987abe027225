"""Soft-max functional rho(y) = ln E exp<y, Z> and related bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .dist import (
    DEFAULT_ENUM_CAP,
    Coupling,
    DiscreteDistribution,
    largest_remainder_counts,
    mutual_information,
)
from .errors import DimensionMismatch, EnumerationTooLarge


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo mean with its standard error (sample sd / sqrt(trials))."""

    mean: float
    stderr: float
    trials: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed: int) -> EstimateWithError:
        s = np.asarray(samples, dtype=float)
        if s.size < 2:
            raise ValueError("need at least two trials for a standard error")
        return cls(float(s.mean()), float(s.std(ddof=1) / np.sqrt(s.size)),
                   int(s.size), int(seed))


def trial_generators(seed: int, trials: int) -> list[np.random.Generator]:
    """One independent generator per trial, derived from (seed, trial index).

    Results therefore do not depend on the order in which trials run.
    """
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(trials)]


def soft_max(pz: DiscreteDistribution, y) -> float:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != pz.n:
        raise DimensionMismatch(f"y has dimension {y.shape[0]}, P_Z lives in R^{pz.n}")
    return float(logsumexp(pz.points @ y, b=pz.probs))


def soft_max_many(pz: DiscreteDistribution, ys: np.ndarray) -> np.ndarray:
    """Row-wise soft_max for a (m, n) array of arguments."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ys.shape[1] != pz.n:
        raise DimensionMismatch("argument dimension does not match P_Z")
    return logsumexp(ys @ pz.points.T, b=pz.probs[None, :], axis=1)


def expected_soft_max_mc(pz: DiscreteDistribution,
                         y_sampler: Callable[[np.random.Generator], np.ndarray],
                         trials: int, seed: int) -> EstimateWithError:
    ys = np.array([np.asarray(y_sampler(g), dtype=float).ravel()
                   for g in trial_generators(seed, trials)])
    return EstimateWithError.from_samples(soft_max_many(pz, ys), seed)


def expected_soft_max_exact(py: DiscreteDistribution, pz: DiscreteDistribution) -> float:
    """E[rho(Y)] for a finitely supported Y, summed exactly."""
    return float(py.probs @ soft_max_many(pz, py.points))


def gaussian_rho_closed_form(s: float, y) -> float:
    """rho(y) for P_Z = N(0, s^2 I): s^2 |y|^2 / 2."""
    if s <= 0:
        raise ValueError("s must be positive")
    y = np.asarray(y, dtype=float)
    return float(0.5 * s * s * np.dot(y.ravel(), y.ravel()))


def dv_lower_bound(c: Coupling) -> float:
    """-I(Y;Z) + E<Y,Z> under the coupling; never exceeds E[rho(Y)]."""
    return -mutual_information(c) + c.expected(c.inner_product_cost())


def _contingency_tables(rows, cols, cap):
    """Nonnegative integer matrices with the given row and column sums."""
    rows = list(rows)
    ncol = len(cols)
    out = []

    def compositions(total, caps):
        if len(caps) == 1:
            if total <= caps[0]:
                yield (total,)
            return
        rest_cap = sum(caps[1:])
        for first in range(max(0, total - rest_cap), min(total, caps[0]) + 1):
            for tail in compositions(total - first, caps[1:]):
                yield (first,) + tail

    def rec(i, remaining, acc):
        if i == len(rows) - 1:
            if sum(remaining) != rows[i]:
                return
            out.append(acc + [tuple(remaining)])
            if len(out) > cap:
                raise EnumerationTooLarge(f"more than {cap} joint types")
            return
        for row in compositions(rows[i], remaining):
            rec(i + 1, [r - x for r, x in zip(remaining, row)], acc + [row])

    rec(0, list(cols), [])
    return np.array(out, dtype=np.int64).reshape(-1, len(rows), ncol)


def product_type_softmax(py: DiscreteDistribution, pz: DiscreteDistribution, N: int,
                         cap: int = DEFAULT_ENUM_CAP) -> float:
    """(1/N) ln E exp<y^N, Z^N> with Z^N uniform on the P_Z type class of length N.

    y^N is one fixed member of the P_Y type class; by permutation invariance
    every member gives the same value. The expectation is summed exactly over
    joint types, each weighted by the number of Z^N sequences realizing it.
    Both types are formed by largest-remainder rounding of N * probs.
    """
    if py.n != pz.n:
        raise DimensionMismatch("P_Y and P_Z must live in the same space")
    a = largest_remainder_counts(py.probs, N)
    b = largest_remainder_counts(pz.probs, N)
    ia, ib = np.flatnonzero(a), np.flatnonzero(b)
    a, b = a[ia], b[ib]
    cost = py.points[ia] @ pz.points[ib].T
    tables = _contingency_tables(a, b, cap)
    log_count = (gammaln(a + 1).sum() - gammaln(tables + 1).sum(axis=(1, 2))
                 - gammaln(N + 1) + gammaln(b + 1).sum())
    energy = np.einsum("tij,ij->t", tables, cost)
    return float(logsumexp(log_count + energy) / N)
