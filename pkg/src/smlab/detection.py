"""Spiked tensor detection: H0 T = W against H1 T = lam X^{(x)d} + W.

W has iid N(0, 2/n) entries and sqrt(n) X is uniform on the P_X type class.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import beta as beta_dist

from .dist import DEFAULT_ENUM_CAP, TypeClassSpec, entropy, type_class_vectors
from .errors import CapExceeded
from .softmax import EstimateWithError, trial_generators
from .spin_models import SpikedTensorModel, outer_power, tensor_contract

H0_TRIALS = 501


@dataclass(frozen=True, eq=False)
class DetectionInstance:
    model: SpikedTensorModel
    T: np.ndarray
    hypothesis: int
    spike: np.ndarray | None = None


def _noise(model: SpikedTensorModel, rng) -> np.ndarray:
    return rng.standard_normal((model.n,) * model.d) * math.sqrt(2.0 / model.n)


def simulate_observation(model: SpikedTensorModel, hypothesis: int, seed) -> DetectionInstance:
    if hypothesis not in (0, 1):
        raise ValueError("hypothesis must be 0 or 1")
    model.check_cap()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if hypothesis == 0:
        return DetectionInstance(model, _noise(model, rng), 0)
    x = model.sample_spin(rng)
    T = model.lam * outer_power(x, model.d) + _noise(model, rng)
    return DetectionInstance(model, T, 1, x)


def kl_h0_h1_mc(model: SpikedTensorModel, trials: int, seed: int,
                enum_cap: int = DEFAULT_ENUM_CAP) -> EstimateWithError:
    """MC estimate of D(P_H0 || P_H1).

    Per noise draw: n lam^2 |X|^{2d} / 4 - ln E_X exp((n lam / 2) <W, X^{(x)d}>),
    with the inner mean taken exactly over the type class. |X| is constant on
    the class, and equals 1 for unit-variance types.
    """
    model.check_cap()
    spins = model.spins(enum_cap)
    shift = 0.25 * model.n * model.lam**2 * model.spin_norm_sq() ** model.d
    coef = 0.5 * model.n * model.lam
    vals = []
    for rng in trial_generators(seed, trials):
        W = _noise(model, rng)
        vals.append(shift - float(logsumexp(coef * tensor_contract(W, spins))
                                  - math.log(len(spins))))
    return EstimateWithError.from_samples(vals, seed)


def candidate_spins(model: SpikedTensorModel, candidate_cap: int = DEFAULT_ENUM_CAP,
                    typicality_tol: float = 0.0) -> np.ndarray:
    """Vectors v with sqrt(n) v typical for P_X, one per row, no repeats.

    With tol 0 this is the rounded type class only; otherwise every type whose
    frequencies lie within tol (sup norm) of P_X contributes its class.
    """
    base = model.px
    n = model.n
    specs = [TypeClassSpec(base, n)]
    if typicality_tol > 0:
        specs = []
        for head in itertools.product(range(n + 1), repeat=base.size - 1):
            last = n - sum(head)
            if last < 0:
                continue
            counts = (*head, last)
            if max(abs(c / n - p) for c, p in zip(counts, base.probs)) <= typicality_tol:
                specs.append(TypeClassSpec(base, n, counts))
        rounded = TypeClassSpec(base, n).counts
        if all(s.counts != rounded for s in specs):
            specs.append(TypeClassSpec(base, n))
    total = sum(s.size for s in specs)
    if total > candidate_cap:
        raise CapExceeded(f"{total} candidates exceed cap {candidate_cap}")
    return np.vstack([type_class_vectors(s) for s in specs]) / math.sqrt(n)


def ml_statistic(T: np.ndarray, model: SpikedTensorModel,
                 candidate_cap: int = DEFAULT_ENUM_CAP, typicality_tol: float = 0.0,
                 candidates: np.ndarray | None = None) -> float:
    """max over typical v of <T, v^{(x)d}>."""
    if candidates is None:
        candidates = candidate_spins(model, candidate_cap, typicality_tol)
    return float(np.max(tensor_contract(T, candidates)))


def binary_divergence(a: float, b: float) -> float:
    """d(a || b) between Bernoulli laws, in nats."""
    out = 0.0
    for x, y in ((a, b), (1 - a, 1 - b)):
        if x > 0:
            if y <= 0:
                return math.inf
            out += x * math.log(x / y)
    return max(out, 0.0)


def clopper_pearson(k: int, n: int, alpha: float = 1e-3) -> tuple[float, float]:
    """Two-sided exact binomial confidence interval at level 1 - alpha."""
    lo = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class DetectionSummary:
    m_n: float
    type2_rate: EstimateWithError
    asymptote: float
    surrogate: float
    type1_hat: float
    h0_trials: int
    h1_misses: int
    H: float
    n: int

    @property
    def exponent_hat(self) -> float:
        """-(1/n) ln of the surrogate miss probability."""
        return math.inf if self.surrogate <= 0 else -math.log(self.surrogate) / self.n

    @property
    def raw_exponent(self) -> float:
        p = self.type2_rate.mean
        return math.inf if p <= 0 else -math.log(p) / self.n


def threshold_and_exponent(model: SpikedTensorModel, trials: int, seed: int,
                           h0_trials: int = H0_TRIALS,
                           candidate_cap: int = DEFAULT_ENUM_CAP,
                           typicality_tol: float = 0.0) -> DetectionSummary:
    """Median threshold under H0, miss rate under H1 and its Gaussian surrogate.

    m_n is the sample median of the ML statistic over ``h0_trials`` noise draws
    (odd, so no interpolation). The surrogate P(lam s + N(0, 2 s / n) <= m_n),
    s = |X|^{2d}, bounds the miss probability of the ML test from above.
    """
    model.check_cap()
    cands = candidate_spins(model, candidate_cap, typicality_tol)
    gens = trial_generators(seed, h0_trials + trials)
    h0 = np.array([ml_statistic(_noise(model, g), model, candidates=cands)
                   for g in gens[:h0_trials]])
    m_n = float(np.median(h0))
    misses = np.array([
        ml_statistic(simulate_observation(model, 1, g).T, model, candidates=cands) <= m_n
        for g in gens[h0_trials:]], dtype=float)
    s = model.spin_norm_sq() ** model.d
    surrogate = float(ndtr((m_n - model.lam * s) / math.sqrt(2.0 * s / model.n)))
    H = entropy(model.px)
    return DetectionSummary(
        m_n=m_n,
        type2_rate=EstimateWithError.from_samples(misses, seed),
        asymptote=(model.lam / 2.0 - math.sqrt(H)) ** 2,
        surrogate=surrogate,
        type1_hat=float(np.mean(h0 <= m_n)),
        h0_trials=h0_trials,
        h1_misses=int(misses.sum()),
        H=H,
        n=model.n,
    )


def data_processing_check(kl: EstimateWithError, summary: DetectionSummary,
                          alpha: float = 1e-3) -> tuple[float, float]:
    """Both sides of KL >= d(P_H0(E) || P_H1(E)), conservatively.

    Returns (kl lower end, divergence lower bound): the KL side is the
    estimate minus 3 stderr, the binary divergence is evaluated at the
    confidence-interval endpoints that make it smallest.
    """
    a_hat = summary.type1_hat
    k0 = int(round(a_hat * summary.h0_trials))
    a_lo, a_hi = clopper_pearson(k0, summary.h0_trials, alpha)
    k1, n1 = summary.h1_misses, summary.type2_rate.trials
    b_lo, b_hi = clopper_pearson(k1, n1, alpha)
    # smallest d(a||b) over the box; d is convex with minimum 0 on a = b
    if a_hi >= b_lo and b_hi >= a_lo:
        lower = 0.0
    elif a_lo > b_hi:
        lower = binary_divergence(a_lo, b_hi)
    else:
        lower = binary_divergence(a_hi, b_lo)
    return kl.mean - 3 * kl.stderr, lower
