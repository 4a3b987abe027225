"""Sinkhorn-scaling engine for information-constrained transport problems.

Two directions are covered. Maximizing an expected cost under a mutual
information budget uses the Gibbs kernel exp(lam * c); minimizing mutual
information under a linear cost constraint uses exp(-beta * c). In both cases
the multiplier is tuned by a bracketed root search and the inner problem is an
alternating-normalization (Sinkhorn) I-projection onto the set of couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.optimize import brentq, linprog
from scipy.special import logsumexp

from .dist import Coupling, DiscreteDistribution, entropy, mutual_information
from .errors import (
    DimensionMismatch,
    DomainError,
    InfeasibleBudget,
    InfeasibleMask,
    IterationLimit,
    NonConvergence,
    SupportTooLarge,
)

Sense = Literal["maximize-cost", "minimize-mi"]

MARGINAL_TOL = 1e-9
MI_TOL = 1e-6
COST_TOL = 1e-9
EXACT_LP_CAP = 64
CUTTING_PLANE_CAP = 32


@dataclass(frozen=True, eq=False)
class SinkhornProblem:
    row_dist: DiscreteDistribution
    col_dist: DiscreteDistribution
    cost: np.ndarray
    multiplier: float
    sense: Sense = "maximize-cost"
    support_mask: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float)
        if c.shape != (self.row_dist.size, self.col_dist.size):
            raise DimensionMismatch(f"cost shape {c.shape} does not match supports")
        if not np.all(np.isfinite(c)):
            raise ValueError("cost must be finite")
        if self.multiplier < 0:
            raise DomainError("multiplier must be nonnegative")
        if self.sense not in ("maximize-cost", "minimize-mi"):
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "cost", c)
        if self.support_mask is not None:
            m = np.asarray(self.support_mask, dtype=bool)
            if m.shape != c.shape:
                raise DimensionMismatch("mask shape does not match cost")
            object.__setattr__(self, "support_mask", m)

    def log_kernel(self) -> np.ndarray:
        sign = 1.0 if self.sense == "maximize-cost" else -1.0
        lk = sign * self.multiplier * self.cost
        if self.support_mask is not None:
            lk = np.where(self.support_mask, lk, -np.inf)
        return lk

    def objective(self, coupling: Coupling) -> float:
        e = coupling.expected(self.cost)
        mi = mutual_information(coupling)
        if self.sense == "maximize-cost":
            return self.multiplier * e - mi
        return mi + self.multiplier * e


@dataclass(frozen=True, eq=False)
class SolverReport:
    coupling: Coupling
    objective: float
    mi: float
    expected_cost: float
    iterations: int
    marginal_residual: float
    multiplier: float = float("nan")
    potentials: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)


@dataclass(frozen=True)
class GaussianLaw:
    """N(0, scale^2 I_dim), handled through closed forms only."""

    dim: int
    scale: float = 1.0


# linear programs


def transport_lp(a: np.ndarray, b: np.ndarray, cost: np.ndarray, maximize: bool = False,
                 mask: np.ndarray | None = None):
    """Exact transportation LP via HiGHS.

    Returns (value, plan, u, v) where (u, v) are the dual potentials:
    u_i + v_j >= c_ij for a maximization, <= c_ij for a minimization, with
    equality on the support of every optimal plan.
    """
    k, m = cost.shape
    if mask is None:
        mask = np.ones((k, m), dtype=bool)
    ii, jj = np.nonzero(mask)
    nv = ii.size
    A = sparse.vstack([
        sparse.csr_matrix((np.ones(nv), (ii, np.arange(nv))), shape=(k, nv)),
        sparse.csr_matrix((np.ones(nv), (jj, np.arange(nv))), shape=(m, nv)),
    ]).tocsr()
    c = cost[ii, jj]
    # one marginal equation is redundant; keeping it lets rounding in the
    # totals make presolve declare the system infeasible
    res = linprog(-c if maximize else c, A_eq=A[:-1], b_eq=np.concatenate([a, b[:-1]]),
                  bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleMask("no coupling is supported on the given mask")
    if res.status != 0:
        raise NonConvergence(f"transport LP failed: {res.message}")
    plan = np.zeros((k, m))
    plan[ii, jj] = np.clip(res.x, 0.0, None)
    duals = np.append(res.eqlin.marginals, 0.0)
    if maximize:
        duals = -duals
    value = float(c @ res.x)
    return value, plan, duals[:k], duals[k:]


def essential_support(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Entries of ``mask`` that are positive for some coupling supported on ``mask``.

    Sinkhorn on a kernel whose zero pattern forces extra zeros converges only
    sublinearly; trimming the mask to this set restores linear convergence.
    Each round maximizes the total mass on still-undecided entries; whatever
    comes out positive is essential, and a zero optimum settles the rest.
    """
    undecided = mask.copy()
    essential = np.zeros_like(mask)
    k, m = mask.shape
    ii, jj = np.nonzero(mask)
    nv = ii.size
    A = sparse.vstack([
        sparse.csr_matrix((np.ones(nv), (ii, np.arange(nv))), shape=(k, nv)),
        sparse.csr_matrix((np.ones(nv), (jj, np.arange(nv))), shape=(m, nv)),
    ]).tocsr()
    rhs = np.concatenate([a, b[:-1]])
    A = A[:-1]
    while undecided.any():
        c = -undecided[ii, jj].astype(float)
        res = linprog(c, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
        if res.status == 2:
            raise InfeasibleMask("no coupling is supported on the given mask")
        if res.status != 0:
            raise NonConvergence(f"support LP failed: {res.message}")
        pos = res.x > 1e-13 * max(1.0, float(rhs.max()))
        found = np.zeros_like(mask)
        found[ii[pos], jj[pos]] = True
        essential |= found
        newly = undecided & found
        if not newly.any():
            break
        undecided &= ~found
    return essential


# Sinkhorn core


NEWTON_AFTER = 1_000
NEWTON_MAX_SIZE = 2_000


def _residual(plan, a, b):
    return max(np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum())


def _newton_polish(a, b, log_k, f, g, tol, steps=50):
    """Damped Newton on the convex dual sum(P) - <a,f> - <b,g>.

    Scaling converges linearly at a rate that degrades like exp(-multiplier
    * gap); Newton recovers quadratic convergence once the potentials are
    close. The last column potential is pinned to remove the shift freedom.
    Returns (f, g) on success, None if the polish did not reach tol.
    """
    k = a.size

    def dual(f, g):
        return float(np.exp(log_k + f[:, None] + g[None, :]).sum() - a @ f - b @ g)

    for _ in range(steps):
        plan = np.exp(log_k + f[:, None] + g[None, :])
        if _residual(plan, a, b) <= tol:
            return f, g
        r = np.concatenate([plan.sum(axis=1) - a, (plan.sum(axis=0) - b)[:-1]])
        jac = np.block([[np.diag(plan.sum(axis=1)), plan[:, :-1]],
                        [plan[:, :-1].T, np.diag(plan.sum(axis=0)[:-1])]])
        try:
            step = -np.linalg.solve(jac, r)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        df, dg = step[:k], np.append(step[k:], 0.0)
        base, slope, t = dual(f, g), float(r @ step), 1.0
        while t > 1e-12:
            if dual(f + t * df, g + t * dg) <= base + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return None
        f, g = f + t * df, g + t * dg
    plan = np.exp(log_k + f[:, None] + g[None, :])
    return (f, g) if _residual(plan, a, b) <= tol else None


def _sinkhorn(a, b, log_k, tol, max_iter, f=None, g=None, block=50):
    """Scale exp(log_k) to marginals a, b (all strictly positive).

    Potentials f, g are kept in the log domain; between absorptions plain
    multiplicative scaling runs on a kernel whose entries are O(1). When
    scaling is slow on a small problem a Newton polish finishes the job.
    """
    newton_ok = a.size + b.size <= NEWTON_MAX_SIZE
    next_newton = NEWTON_AFTER
    if f is None or g is None:
        finite = np.where(np.isfinite(log_k), log_k, -np.inf)
        f = np.log(a) - finite.max(axis=1)
        g = np.zeros(b.size)
    iters = 0
    while True:
        # exact log-domain half steps keep the kernel well scaled
        f = np.log(a) - logsumexp(log_k + g[None, :], axis=1)
        g = np.log(b) - logsumexp(log_k + f[:, None], axis=0)
        iters += 1
        kern = np.exp(log_k + f[:, None] + g[None, :])
        u = np.ones(a.size)
        v = np.ones(b.size)
        for _ in range(min(block, max(max_iter - iters, 0))):
            kv = kern @ v
            if np.any(kv <= 0) or not np.all(np.isfinite(kv)):
                break
            u = a / kv
            ktu = kern.T @ u
            if np.any(ktu <= 0) or not np.all(np.isfinite(ktu)):
                break
            v = b / ktu
            iters += 1
            if np.abs(np.log(u)).max() > 30 or np.abs(np.log(v)).max() > 30:
                break
        f = f + np.log(u)
        g = g + np.log(v)
        plan = np.exp(log_k + f[:, None] + g[None, :])
        resid = _residual(plan, a, b)
        if resid <= tol:
            return plan, f, g, iters, float(resid)
        if newton_ok and iters >= next_newton:
            next_newton *= 4
            polished = _newton_polish(a, b, log_k, f, g, tol)
            if polished is not None:
                f, g = polished
                plan = np.exp(log_k + f[:, None] + g[None, :])
                return plan, f, g, iters, float(_residual(plan, a, b))
        if iters >= max_iter:
            raise NonConvergence(
                f"Sinkhorn residual {resid:.3e} > {tol:.1e} after {iters} iterations")


def sinkhorn_solve(p: SinkhornProblem, tol: float = MARGINAL_TOL, max_iter: int = 200_000,
                   warm: tuple[np.ndarray, np.ndarray] | None = None) -> SolverReport:
    a_full, b_full = p.row_dist.probs, p.col_dist.probs
    ri, ci = np.flatnonzero(a_full > 0), np.flatnonzero(b_full > 0)
    a, b = a_full[ri], b_full[ci]
    log_k = p.log_kernel()[np.ix_(ri, ci)]
    if p.support_mask is not None:
        mask = p.support_mask[np.ix_(ri, ci)]
        ess = essential_support(a, b, mask)
        log_k = np.where(ess, log_k, -np.inf)
    f0 = g0 = None
    if warm is not None and warm[0].shape == a.shape and warm[1].shape == b.shape:
        f0, g0 = warm
    plan, f, g, iters, _ = _sinkhorn(a, b, log_k, tol * 0.5, max_iter, f0, g0)
    full = np.zeros((a_full.size, b_full.size))
    full[np.ix_(ri, ci)] = plan
    cp = Coupling(p.row_dist, p.col_dist, full / full.sum(), marginal_tol=tol)
    return _report(p, cp, iters, (f, g))


def _report(p: SinkhornProblem, cp: Coupling, iters: int, potentials=None) -> SolverReport:
    mi = mutual_information(cp)
    return SolverReport(coupling=cp, objective=p.objective(cp), mi=mi,
                        expected_cost=cp.expected(p.cost), iterations=iters,
                        marginal_residual=cp.marginal_residual(),
                        multiplier=p.multiplier, potentials=potentials)


def _plan_report(row, col, cost, plan, sense, multiplier=float("nan")) -> SolverReport:
    cp = Coupling(row, col, plan / plan.sum())
    prob = SinkhornProblem(row, col, cost, 0.0, sense)
    rep = _report(prob, cp, 0)
    obj = (multiplier * rep.expected_cost - rep.mi if sense == "maximize-cost"
           else rep.mi + multiplier * rep.expected_cost)
    return SolverReport(cp, obj if np.isfinite(multiplier) else float("nan"), rep.mi,
                        rep.expected_cost, 0, rep.marginal_residual, multiplier)


class _GibbsFamily:
    """Sinkhorn solutions along a one-parameter Gibbs family, cached and warm-started."""

    def __init__(self, row, col, cost, sense, mask=None):
        self.row, self.col, self.cost, self.sense, self.mask = row, col, cost, sense, mask
        self.cache: dict[float, SolverReport] = {}
        self._warm = None

    def __call__(self, mult: float) -> SolverReport:
        if mult not in self.cache:
            prob = SinkhornProblem(self.row, self.col, self.cost, mult, self.sense,
                                   self.mask)
            rep = sinkhorn_solve(prob, warm=self._warm)
            self._warm = rep.potentials
            self.cache[mult] = rep
        return self.cache[mult]


def _solve_multiplier(fam: _GibbsFamily, stat, target: float, lo: float, hi: float,
                      xtol: float) -> SolverReport:
    """Find the multiplier where stat(report) = target, stat increasing in it."""
    def h(t):
        return stat(fam(math.exp(t))) - target

    t = brentq(h, math.log(lo), math.log(hi), xtol=xtol, rtol=4 * np.finfo(float).eps,
               maxiter=200)
    return fam(math.exp(t))


# public solvers


def max_transport_under_mi(py, pz, R: float, lam_cap: float = 1e4):
    """sup E<Y,Z> over couplings with I(Y;Z) <= R.

    Returns (value, report). The report's coupling is feasible up to MI_TOL, so
    the value is a lower bound on the supremum; at the optimum multiplier lam
    it also meets the Lagrangian upper bound (objective(lam) + R) / lam.
    For two GaussianLaw arguments the jointly Gaussian closed form is used and
    the report is None.
    """
    if R < 0:
        raise DomainError("R must be nonnegative")
    if isinstance(py, GaussianLaw) or isinstance(pz, GaussianLaw):
        if not (isinstance(py, GaussianLaw) and isinstance(pz, GaussianLaw)):
            raise TypeError("Gaussian closed form needs both laws Gaussian")
        if py.dim != pz.dim or py.scale != 1.0:
            raise DimensionMismatch("closed form needs P_Y = N(0, I_n) and matching dims")
        return gaussian_max_transport_under_mi(pz.dim, R, pz.scale), None
    if py.n != pz.n:
        raise DimensionMismatch("P_Y and P_Z must live in the same space")

    cost = py.points @ pz.points.T
    fam = _GibbsFamily(py, pz, cost, "maximize-cost")
    if R <= 0.0:
        rep = fam(0.0)
        return rep.expected_cost, rep

    ot_value, plan, _, _ = transport_lp(py.probs, pz.probs, cost, maximize=True)
    lp_rep = _plan_report(py, pz, cost, plan, "maximize-cost")
    if R >= min(entropy(py), entropy(pz)) or lp_rep.mi <= R:
        return ot_value, lp_rep

    scale = max(float(np.ptp(cost)), 1e-300)
    lo, hi = 0.0, 1.0 / scale
    while fam(hi).mi < R:
        lo = hi
        hi *= 2.0
        if hi * scale > lam_cap:
            # multiplier cap reached: best feasible Gibbs coupling, within H/lam of OT
            rep = fam(lo)
            return rep.expected_cost, rep
    if lo == 0.0:
        lo = hi
        while fam(lo).mi > R:
            lo /= 2.0
    rep = _solve_multiplier(fam, lambda r: r.mi, R, lo, hi, xtol=1e-13)
    if abs(rep.mi - R) > MI_TOL:
        raise NonConvergence(f"MI {rep.mi} missed target {R}")
    return rep.expected_cost, rep


def gaussian_max_transport_under_mi(n: int, R: float, s: float = 1.0) -> float:
    """n s sqrt(1 - exp(-2R/n)): jointly Gaussian coupling of N(0,I) and N(0,s^2 I)."""
    return n * s * math.sqrt(-math.expm1(-2.0 * R / n))


def min_mi_under_linear_constraint(pz: DiscreteDistribution, cost: np.ndarray, budget: float,
                                   direction: str = "<=", beta_cap: float = 1e6):
    """min I(Z; Zbar) over couplings of pz with itself with E[cost] <= (or >=) budget.

    The minimizers form the Gibbs family pz x pz * exp(-beta cost); beta is
    tuned until the constraint is active. Budgets at the extreme value are
    handled on the optimal face of the transport LP (an I-projection onto the
    couplings supported where the LP reduced cost vanishes).
    Returns (nats, report).
    """
    cost = np.asarray(cost, dtype=float)
    if direction not in ("<=", ">="):
        raise ValueError("direction must be '<=' or '>='")
    sign = 1.0 if direction == "<=" else -1.0
    c, b = sign * cost, sign * budget
    p = pz.probs
    fam = _GibbsFamily(pz, pz, c, "minimize-mi")

    indep = float(p @ c @ p)
    if indep <= b + COST_TOL:
        rep = fam(0.0)
        return rep.mi, _signed(rep, sign)

    cmin, _, u, v = transport_lp(p, p, c, maximize=False)
    scale = max(float(np.ptp(c)), 1e-300)
    if b < cmin - COST_TOL * max(1.0, abs(cmin)):
        raise InfeasibleBudget(
            f"budget {budget} unreachable; extreme feasible value is {sign * cmin}")

    def face_solution():
        reduced = c - u[:, None] - v[None, :]
        mask = reduced <= 1e-9 * scale
        face = _GibbsFamily(pz, pz, c, "minimize-mi", mask)
        return face(0.0)

    if b <= cmin + COST_TOL * max(1.0, abs(cmin)):
        rep = face_solution()
        return rep.mi, _signed(rep, sign)

    hi = 1.0 / scale
    lo = 0.0
    while fam(hi).expected_cost > b:
        lo = hi
        hi *= 2.0
        if hi * scale > beta_cap:
            rep = face_solution()
            return rep.mi, _signed(rep, sign)
    if lo == 0.0:
        lo = hi
        while fam(lo).expected_cost < b:
            lo /= 2.0
    rep = _solve_multiplier(fam, lambda r: -r.expected_cost, -b, lo, hi, xtol=1e-14)
    if rep.expected_cost > b + COST_TOL * max(1.0, abs(b)) * 10:
        raise NonConvergence(f"constraint missed: {rep.expected_cost} vs {b}")
    return rep.mi, _signed(rep, sign)


def _signed(rep: SolverReport, sign: float) -> SolverReport:
    if sign > 0:
        return rep
    return SolverReport(rep.coupling, rep.objective, rep.mi, -rep.expected_cost,
                        rep.iterations, rep.marginal_residual, rep.multiplier,
                        rep.potentials)


def i_eps_threshold(px: DiscreteDistribution, d: int, eps: float) -> float:
    """(E X^2)^d - eps^2 / 2, the right side of the power-form constraint."""
    return px.second_moment() ** d - 0.5 * eps * eps


def compute_I_eps(px: DiscreteDistribution, d: int, eps: float) -> float:
    """min I(X; Xbar) over self-couplings with (E[X Xbar])^d >= (E X^2)^d - eps^2/2.

    Case analysis on the sign of the threshold a and the parity of d:

    * a <= 0: (E X Xbar)^d >= a holds for the independent coupling, whose
      correlation (E X)^2 is nonnegative, for either parity. Result 0.
    * a > 0, d odd: equivalent to E[X Xbar] >= a^(1/d).
    * a > 0, d even: |E[X Xbar]| >= a^(1/d); both the positive and the
      negative branch are solved and the smaller MI is returned.
    """
    if d < 1:
        raise DomainError("d must be >= 1")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if px.n != 1:
        raise DimensionMismatch("I_eps is defined for laws on the real line")
    a = i_eps_threshold(px, d, eps)
    if a <= 0.0:
        return 0.0
    c = a ** (1.0 / d)
    x = px.atoms_1d()
    corr = np.outer(x, x)
    best = math.inf
    branches = [(corr, c, ">=")]
    if d % 2 == 0:
        branches.append((corr, -c, "<="))
    for cost, budget, direction in branches:
        try:
            val, _ = min_mi_under_linear_constraint(px, cost, budget, direction)
        except InfeasibleBudget:
            continue
        best = min(best, val)
    if not math.isfinite(best):
        raise InfeasibleBudget(f"no self-coupling meets the constraint at eps={eps}, d={d}")
    return best


def min_mi_support_constrained(pz: DiscreteDistribution, radius: float):
    """min I(Z; Zbar) over self-couplings with |Z - Zbar|^2 <= radius^2 surely."""
    diff = pz.points[:, None, :] - pz.points[None, :, :]
    sq = np.sum(diff**2, axis=2)
    mask = sq <= radius * radius * (1 + 1e-12) + 1e-300
    prob = SinkhornProblem(pz, pz, sq, 0.0, "minimize-mi", mask)
    rep = sinkhorn_solve(prob)
    return rep.mi, rep


def max_inner_product_ot(delta_dist: DiscreteDistribution, py: DiscreteDistribution,
                         cap: int = EXACT_LP_CAP) -> float:
    """max E<Delta, Y> over couplings of the two laws, solved exactly as an LP."""
    if delta_dist.size > cap or py.size > cap:
        raise SupportTooLarge(f"supports {delta_dist.size} x {py.size} exceed cap {cap}")
    if delta_dist.n != py.n:
        raise DimensionMismatch("Delta and Y must live in the same space")
    value, *_ = transport_lp(delta_dist.probs, py.probs, delta_dist.points @ py.points.T,
                             maximize=True)
    return value


def _worst_case(pi: np.ndarray, pair_cost: np.ndarray, q: np.ndarray):
    """sup over couplings of (pair law pi, P_Y) of E[cost]; returns (value, v).

    ``pair_cost`` has shape (k, k, m): <z_j - z_i, y_l>. v is the Y-side dual.
    """
    k = pi.shape[0]
    flat = pi.ravel()
    live = flat > 0
    c = pair_cost.reshape(k * k, -1)[live]
    value, _, _, v = transport_lp(flat[live] / flat[live].sum(), q, c, maximize=True)
    return value, v


def delta_law(pz: DiscreteDistribution, pi: np.ndarray) -> DiscreteDistribution:
    """Law of Zbar - Z when (Z, Zbar) ~ pi (rows index Z)."""
    diff = pz.points[None, :, :] - pz.points[:, None, :]
    flat = pi.ravel()
    live = flat > 0
    return DiscreteDistribution(diff.reshape(-1, pz.n)[live], flat[live] / flat[live].sum())


def min_mi_transport_constrained(pz: DiscreteDistribution, py: DiscreteDistribution,
                                 budget: float, max_rounds: int = 200,
                                 cap: int = CUTTING_PLANE_CAP):
    """min I(Z; Zbar) over self-couplings pi with sup_{Y coupling} E<Zbar - Z, Y> <= budget.

    The constraint functional g(pi) is the value of a transportation LP whose
    marginal is pi, hence concave in pi; every dual vector v of that LP gives
    the linear majorant g(pi') <= sum pi'_ij max_l(<z_j - z_i, y_l> - v_l) + <q, v>,
    tight at the pi it was computed for. Each round takes the dual of the
    current worst-case coupling, imposes the majorant as a linear constraint and
    re-solves the Gibbs/Sinkhorn problem. Iterates stay feasible and the MI is
    nonincreasing; the loop stops when a round improves it by less than 1e-10.
    The start point is the least-correlated feasible mixture of independence
    and the diagonal coupling. Returns (nats, report).
    """
    if pz.size > cap or py.size > 4 * EXACT_LP_CAP:
        raise SupportTooLarge(f"support of size {pz.size} exceeds cap {cap}")
    if pz.n != py.n:
        raise DimensionMismatch("P_Z and P_Y must live in the same space")
    if budget < 0:
        # g(pi) >= <E[Zbar - Z], E Y> = 0 for every self-coupling
        raise InfeasibleBudget("budget must be nonnegative")
    p, q = pz.probs, py.probs
    pair_cost = np.einsum("jn,ln->jl", pz.points, py.points)
    pair_cost = pair_cost[None, :, :] - pair_cost[:, None, :]

    def g(pi):
        return _worst_case(pi, pair_cost, q)[0]

    prod = np.outer(p, p)
    if g(prod) <= budget + COST_TOL:
        rep = _plan_report(pz, pz, np.zeros_like(prod), prod, "minimize-mi", 0.0)
        return 0.0, rep

    diag = np.diag(p)
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if g((1 - mid) * prod + mid * diag) <= budget:
            hi = mid
        else:
            lo = mid
    pi = (1 - hi) * prod + hi * diag
    cur = Coupling(pz, pz, pi)
    mi = mutual_information(cur)
    rep = None
    for _ in range(max_rounds):
        _, v = _worst_case(pi, pair_cost, q)
        phi = np.max(pair_cost - v[None, None, :], axis=2)
        rhs = budget - float(q @ v)
        new_mi, new_rep = min_mi_under_linear_constraint(pz, phi, rhs, "<=")
        new_pi = new_rep.coupling.matrix
        if g(new_pi) > budget + MI_TOL:
            raise NonConvergence("linearized step left the feasible set")
        improved = mi - new_mi
        if new_mi <= mi:
            pi, mi, rep = new_pi, new_mi, new_rep
        if improved <= 1e-10:
            break
    else:
        raise IterationLimit(f"no convergence within {max_rounds} rounds")
    if rep is None:
        rep = _plan_report(pz, pz, np.zeros_like(pi), pi, "minimize-mi", 0.0)
    # report the constraint functional itself rather than its last majorant
    return mi, replace(rep, expected_cost=g(pi))
