"""Run configurations, sweep execution and the inequality-verification suites.

Every subcommand is a function of a validated ``RunConfig`` that returns a
``Table``: column names plus one row per sweep point, already sorted by the
point's parameters. Verification suites additionally return the
``VerificationRecord`` list the rows were built from.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import coupling as cp
from .detection import kl_h0_h1_mc, threshold_and_exponent
from .dist import DiscreteDistribution, distribution_from_json, entropy
from .errors import ConfigError, SmlabError
from .geometry import barvinok_theta, params_table, tau0, theta0
from .softmax import expected_soft_max_exact, expected_soft_max_mc, product_type_softmax
from .spin_models import (
    RemSpec,
    SpikedTensorModel,
    annealed_bound,
    cor6_limit,
    free_energy_mc,
    rem_free_energy,
    rem_mc,
    thm4_lower_bound,
)

DEFAULT_TOL = 1e-6
STOCHASTIC_SIGMAS = 3.0


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    trials: int | None = None
    out: str | None = None
    tol: float = DEFAULT_TOL

    def echo(self) -> dict:
        return dict(subcommand=self.subcommand, params=self.params, seed=self.seed,
                    trials=self.trials, out=self.out, tol=self.tol)


@dataclass(frozen=True)
class VerificationRecord:
    """One inequality check; margin = rhs - lhs, so margin >= 0 means it holds.

    ``enforced`` records count toward the exit status, the others are reported
    for comparison only.
    """

    id: str
    lhs: float
    rhs: float
    params: dict
    stderr: float = 0.0
    enforced: bool = True

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float = DEFAULT_TOL) -> bool:
        return math.isfinite(self.margin) and self.margin >= -(tol + STOCHASTIC_SIGMAS * self.stderr)


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]]
    records: list[VerificationRecord] = field(default_factory=list)


class PointFailure(SmlabError):
    """A solver error at one sweep point; carries the point's parameters."""

    def __init__(self, params: dict, exc: Exception):
        super().__init__(f"{type(exc).__name__} at {params}: {exc}")
        self.params = params
        self.cause = exc


def pool_size() -> int:
    raw = os.environ.get("SMLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"SMLAB_THREADS must be an integer, got {raw!r}") from None


def sweep(fn: Callable[..., Any], points: Sequence[dict]) -> list[Any]:
    """Evaluate fn(**point) for every point; results come back in input order."""

    def call(point):
        try:
            return fn(**point)
        except ConfigError:
            raise
        except (SmlabError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PointFailure(point, exc) from exc

    workers = min(pool_size(), max(1, len(points)))
    if workers == 1:
        return [call(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(call, points))


def grid(points: dict[str, Sequence]) -> list[dict]:
    """Cartesian product in lexicographic order of the (sorted) values."""
    keys = list(points)
    out = [{}]
    for k in keys:
        out = [dict(p, **{k: v}) for p in out for v in sorted(points[k])]
    return out


def child_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


# ---------------------------------------------------------------- validation

def _number_list(params: dict, key: str, kind=float, positive=False, required=True):
    if key not in params:
        if required:
            raise ConfigError(f"missing grid {key!r}")
        return []
    vals = params[key]
    if not isinstance(vals, list):
        vals = [vals]
    if required and not vals:
        raise ConfigError(f"grid {key!r} is empty")
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"grid {key!r} has non-numeric entry {v!r}")
        if kind is int and float(v) != int(v):
            raise ConfigError(f"grid {key!r} needs integers, got {v!r}")
        v = kind(v)
        if not math.isfinite(v) or (positive and v <= 0):
            raise ConfigError(f"grid {key!r} has invalid entry {v!r}")
        out.append(v)
    params[key] = out
    return out


def _dist(params: dict, key: str, dim: int | None = None) -> DiscreteDistribution:
    if key not in params:
        raise ConfigError(f"missing distribution {key!r}")
    spec = params[key]
    if dim is not None and isinstance(spec, dict) and "dim" not in spec \
            and spec.get("kind") in ("rademacher", "gaussian_grid"):
        spec = dict(spec, dim=dim)
    return distribution_from_json(spec)


def _choice(params: dict, key: str, options: Sequence[str], default: str) -> str:
    val = params.setdefault(key, default)
    if val not in options:
        raise ConfigError(f"{key!r} must be one of {list(options)}, got {val!r}")
    return val


def _positive_int(params: dict, key: str, default: int) -> int:
    val = params.setdefault(key, default)
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        raise ConfigError(f"{key!r} must be a positive integer, got {val!r}")
    return val


def _require_stochastic(cfg: RunConfig) -> tuple[int, int]:
    if cfg.seed is None:
        raise ConfigError("--seed is required for stochastic runs")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.trials is None or isinstance(cfg.trials, bool) or not isinstance(cfg.trials, int) \
            or cfg.trials < 2:
        raise ConfigError("--trials must be an integer >= 2")
    return cfg.seed, cfg.trials


def _reject_unknown(params: dict, allowed: Sequence[str]) -> None:
    extra = sorted(set(params) - set(allowed))
    if extra:
        raise ConfigError(f"unknown config keys {extra}")


# ---------------------------------------------------------------- plain subcommands

def cmd_params(cfg: RunConfig) -> Table:
    p = cfg.params
    _reject_unknown(p, ("tau", "theta"))
    taus = _number_list(p, "tau", required=False)
    thetas = _number_list(p, "theta", required=False)
    if not taus and not thetas:
        raise ConfigError("params needs at least one --tau or --theta value")
    if any(t <= 1 for t in taus) or any(t <= 0 for t in thetas):
        raise ConfigError("need tau > 1 and theta > 0")
    cols = ["tau", "kappa", "theta", "tau0", "theta0"]
    rows = [[r[c] for c in cols] for r in params_table(sorted(taus), sorted(thetas))]
    return Table(cols, rows)


def cmd_ot(cfg: RunConfig) -> Table:
    p = cfg.params
    _reject_unknown(p, ("py", "pz", "R"))
    py, pz = _dist(p, "py"), _dist(p, "pz")
    Rs = _number_list(p, "R")
    if any(r < 0 for r in Rs):
        raise ConfigError("R must be nonnegative")
    if py.n != pz.n:
        raise ConfigError("py and pz must have the same dimension")

    def point(R):
        value, rep = cp.max_transport_under_mi(py, pz, R)
        return [R, value, rep.mi, rep.expected_cost, rep.iterations, rep.marginal_residual]

    rows = sweep(point, grid({"R": Rs}))
    return Table(["R", "value", "mi", "expected_cost", "iterations", "residual"], rows)


def _sq_dist(pz: DiscreteDistribution) -> np.ndarray:
    diff = pz.points[:, None, :] - pz.points[None, :, :]
    return np.sum(diff**2, axis=2)


def cmd_minmi(cfg: RunConfig) -> Table:
    p = cfg.params
    _reject_unknown(p, ("pz", "budget", "cost", "direction", "constraint"))
    pz = _dist(p, "pz")
    budgets = _number_list(p, "budget")
    cost_kind = _choice(p, "cost", ("sqdist", "inner"), "sqdist")
    direction = _choice(p, "direction", ("<=", ">="), "<=")
    mode = _choice(p, "constraint", ("mean", "sure"), "mean")
    if mode == "sure" and (cost_kind != "sqdist" or direction != "<="):
        raise ConfigError("the almost-sure constraint is only defined for sqdist with <=")
    cost = _sq_dist(pz) if cost_kind == "sqdist" else pz.points @ pz.points.T

    def point(budget):
        if mode == "sure":
            value, rep = cp.min_mi_support_constrained(pz, math.sqrt(max(budget, 0.0)))
        else:
            value, rep = cp.min_mi_under_linear_constraint(pz, cost, budget, direction)
        return [budget, value, rep.mi, rep.expected_cost, rep.iterations,
                rep.marginal_residual]

    rows = sweep(point, grid({"budget": budgets}))
    return Table(["budget", "value", "mi", "expected_cost", "iterations", "residual"], rows)


def cmd_ieps(cfg: RunConfig) -> Table:
    p = cfg.params
    _reject_unknown(p, ("px", "d", "eps"))
    px = _dist(p, "px")
    if px.n != 1:
        raise ConfigError("px must live on the real line")
    ds = _number_list(p, "d", int, positive=True)
    epss = _number_list(p, "eps", positive=True)

    def point(d, eps):
        return [d, eps, cp.i_eps_threshold(px, d, eps), cp.compute_I_eps(px, d, eps)]

    rows = sweep(point, grid({"d": ds, "eps": epss}))
    return Table(["d", "eps", "threshold", "value"], rows)


def cmd_rem(cfg: RunConfig) -> Table:
    seed, trials = _require_stochastic(cfg)
    p = cfg.params
    _reject_unknown(p, ("M", "beta", "method"))
    Ms = _number_list(p, "M", int, positive=True)
    betas = _number_list(p, "beta")
    method = _choice(p, "method", ("auto", "exact", "stratified"), "auto")
    if any(b < 0 for b in betas):
        raise ConfigError("beta must be nonnegative")

    def point(M, beta):
        est = rem_mc(RemSpec(M, beta), trials, seed, method)
        return [M, beta, est.mean, est.stderr, rem_free_energy(beta)]

    rows = sweep(point, grid({"M": Ms, "beta": betas}))
    return Table(["M", "beta", "estimate", "stderr", "closed_form"], rows)


def _spiked_grid(cfg: RunConfig, extra: Sequence[str]):
    p = cfg.params
    _reject_unknown(p, ("n", "d", "lambda", "px", *extra))
    px = _dist(p, "px")
    if px.n != 1:
        raise ConfigError("px must live on the real line")
    pts = grid({"n": _number_list(p, "n", int, positive=True),
                "d": _number_list(p, "d", int, positive=True),
                "lambda": _number_list(p, "lambda")})
    if any(q["lambda"] < 0 for q in pts):
        raise ConfigError("lambda must be nonnegative")
    return px, pts


def cmd_tensor_fe(cfg: RunConfig) -> Table:
    seed, trials = _require_stochastic(cfg)
    px, pts = _spiked_grid(cfg, ("inner",))
    inner = cfg.params.setdefault("inner", "exact")
    if not isinstance(inner, str) or not (inner == "exact" or inner.startswith("mc:")):
        raise ConfigError(f"inner must be 'exact' or 'mc:<k>', got {inner!r}")
    H = entropy(px)

    def point(n, d, **kw):
        lam = kw["lambda"]
        m = SpikedTensorModel(n, d, lam, px)
        est = free_energy_mc(m, trials, seed, inner)
        return [n, d, lam, est.mean, est.stderr, thm4_lower_bound(m),
                cor6_limit(lam, H), annealed_bound(m)]

    rows = sweep(point, pts)
    return Table(["n", "d", "lambda", "estimate", "stderr", "thm4_bound", "cor6_limit",
                  "annealed"], rows)


def cmd_detect(cfg: RunConfig) -> Table:
    seed, trials = _require_stochastic(cfg)
    px, pts = _spiked_grid(cfg, ("h0_trials", "typicality_tol"))
    h0 = _positive_int(cfg.params, "h0_trials", 501)
    tol = cfg.params.setdefault("typicality_tol", 0.0)
    if isinstance(tol, bool) or not isinstance(tol, (int, float)) or tol < 0:
        raise ConfigError("typicality_tol must be a nonnegative number")

    def point(n, d, **kw):
        lam = kw["lambda"]
        m = SpikedTensorModel(n, d, lam, px)
        s = threshold_and_exponent(m, trials, child_seed(seed, 0), h0, typicality_tol=tol)
        kl = kl_h0_h1_mc(m, trials, child_seed(seed, 1))
        return [n, d, lam, s.H, s.m_n, s.type2_rate.mean, s.surrogate, s.exponent_hat,
                s.asymptote, kl.mean / n]

    rows = sweep(point, pts)
    return Table(["n", "d", "lambda", "H", "m_n", "type2_raw", "type2_surrogate",
                  "exponent_hat", "exponent_asymptote", "kl_per_n"], rows)


def cmd_tensorize(cfg: RunConfig) -> Table:
    p = cfg.params
    _reject_unknown(p, ("py", "pz", "N"))
    py, pz = _dist(p, "py"), _dist(p, "pz")
    if py.n != pz.n:
        raise ConfigError("py and pz must have the same dimension")
    Ns = _number_list(p, "N", int, positive=True)
    sup_dv = cp.sinkhorn_solve(cp.SinkhornProblem(py, pz, py.points @ pz.points.T, 1.0)).objective

    def point(N):
        v = product_type_softmax(py, pz, N)
        return [N, v, sup_dv, abs(v - sup_dv)]

    rows = sweep(point, grid({"N": Ns}))
    return Table(["N", "value", "sup_dv", "gap"], rows)


# ---------------------------------------------------------------- verification suites

def _records_table(records: list[VerificationRecord], keys: Sequence[str], tol: float) -> Table:
    records = sorted(records, key=lambda r: (tuple(r.params[k] for k in keys), r.id))
    cols = ["id", *keys, "lhs", "rhs", "margin", "stderr", "enforced", "holds"]
    rows = [[r.id, *(r.params[k] for k in keys), r.lhs, r.rhs, r.margin, r.stderr,
             int(r.enforced), int(r.holds(tol))] for r in records]
    return Table(cols, rows, records)


def verify_e5(cfg: RunConfig) -> Table:
    """Min-MI under a mean squared-distance budget against the transport bound.

    For each (n, R, l): lhs = min I(Z; Zbar) with E|Z - Zbar|^2 <= tau0(R/n)^2 l^2 n / 4,
    rhs = n ln(1 + 2 V(R) / (n l)) with V the MI-constrained transport value.
    """
    p = cfg.params
    _reject_unknown(p, ("dims", "R", "l", "pz", "py"))
    dims = _number_list(p, "dims", int, positive=True)
    Rs = _number_list(p, "R", positive=True)
    ls = _number_list(p, "l", positive=True)
    laws = {n: (_dist(p, "pz", n), _dist(p, "py", n)) for n in dims}
    for n, (pz, py) in laws.items():
        if pz.n != n or py.n != n:
            raise ConfigError(f"distributions must live in R^{n}")

    vals = dict(zip([(q["n"], q["R"]) for q in grid({"n": dims, "R": Rs})],
                    sweep(lambda n, R: cp.max_transport_under_mi(laws[n][1], laws[n][0], R)[0],
                          grid({"n": dims, "R": Rs}))))

    def point(n, R, l):
        pz = laws[n][0]
        budget = 0.25 * tau0(R / n) ** 2 * l * l * n
        lhs, _ = cp.min_mi_under_linear_constraint(pz, _sq_dist(pz), budget)
        rhs = n * math.log1p(2.0 * vals[(n, R)] / (n * l))
        return VerificationRecord("e5", lhs, rhs, dict(n=n, R=R, l=l))

    records = sweep(point, grid({"n": dims, "R": Rs, "l": ls}))
    return _records_table(records, ("n", "R", "l"), cfg.tol)


def verify_thm1(cfg: RunConfig) -> Table:
    """Transport-constrained min-MI against the soft-max bound, plain and sharpened.

    lhs = min I(Z; Zbar) over self-couplings whose worst-case E<Zbar - Z, Y> is at
    most tau l n / 2; rhs = n ln(1 + 2 (E rho(Y) + n theta(tau)) / (l n)). The
    sharpened record replaces E rho(Y) by sup over couplings of -I + E<Y, Z>.
    """
    p = cfg.params
    _reject_unknown(p, ("pz", "py", "tau", "l"))
    pz, py = _dist(p, "pz"), _dist(p, "py")
    if pz.n != py.n:
        raise ConfigError("py and pz must have the same dimension")
    taus = _number_list(p, "tau")
    ls = _number_list(p, "l", positive=True)
    if any(t <= 1 for t in taus):
        raise ConfigError("tau must exceed 1")
    if pz.size > cp.CUTTING_PLANE_CAP:
        raise ConfigError(f"pz has more than {cp.CUTTING_PLANE_CAP} atoms")
    n = pz.n
    e_rho = expected_soft_max_exact(py, pz)
    sharp = cp.sinkhorn_solve(cp.SinkhornProblem(py, pz, py.points @ pz.points.T, 1.0)).objective

    def point(tau, l):
        lhs, _ = cp.min_mi_transport_constrained(pz, py, tau * l * n / 2.0)
        th = barvinok_theta(tau)
        prm = dict(tau=tau, l=l)
        return [VerificationRecord("thm1", lhs, n * math.log1p(2.0 * (e_rho + n * th) / (l * n)), prm),
                VerificationRecord("thm1-sharp", lhs,
                                   n * math.log1p(2.0 * (sharp + n * th) / (l * n)), prm)]

    records = [r for pair in sweep(point, grid({"tau": taus, "l": ls})) for r in pair]
    return _records_table(records, ("tau", "l"), cfg.tol)


def verify_thm5(cfg: RunConfig) -> Table:
    """Gaussian-Y version with theta0, under both readings of the distance constraint.

    thm5-mean bounds E|Z - Zbar|^2 by tau^2 l^2 n / 4, thm5-sure imposes it on
    every pair. E rho(G) is estimated by Monte Carlo, so records carry the
    propagated standard error. Only the mean reading is enforced.
    """
    seed, trials = _require_stochastic(cfg)
    p = cfg.params
    _reject_unknown(p, ("dims", "pz", "tau", "l"))
    dims = _number_list(p, "dims", int, positive=True)
    taus = _number_list(p, "tau")
    ls = _number_list(p, "l", positive=True)
    if any(t <= 1 for t in taus):
        raise ConfigError("tau must exceed 1")
    laws = {n: _dist(p, "pz", n) for n in dims}
    for n, pz in laws.items():
        if pz.n != n:
            raise ConfigError(f"pz must live in R^{n}")
    rho = {n: expected_soft_max_mc(laws[n], lambda g, n=n: g.standard_normal(n), trials, seed)
           for n in dims}

    def point(n, tau, l):
        pz = laws[n]
        r2 = tau * tau * l * l * n / 4.0
        mean_lhs, _ = cp.min_mi_under_linear_constraint(pz, _sq_dist(pz), r2)
        sure_lhs, _ = cp.min_mi_support_constrained(pz, math.sqrt(r2))
        inner = rho[n].mean + n * theta0(tau)
        rhs = n * math.log1p(2.0 * inner / (l * n))
        # delta method: d rhs / d E rho
        se = n * (2.0 / (l * n)) / (1.0 + 2.0 * inner / (l * n)) * rho[n].stderr
        prm = dict(n=n, tau=tau, l=l)
        return [VerificationRecord("thm5-mean", mean_lhs, rhs, prm, se),
                VerificationRecord("thm5-sure", sure_lhs, rhs, prm, se, enforced=False)]

    records = [r for pair in sweep(point, grid({"n": dims, "tau": taus, "l": ls})) for r in pair]
    return _records_table(records, ("n", "tau", "l"), cfg.tol)


def verify_cor4_gaussian(cfg: RunConfig) -> Table:
    """Gaussian closed form against the entropy-power form of the lower bound.

    P_Y = N(0, I_n), P_Z = N(0, s^2 I_n): rhs = n s sqrt(1 - exp(-2R/n)) and
    lhs = n / tau0(R/n) * exp((h(Z) - h_1) / n) with h(Z) - h_1 = n ln s.
    """
    p = cfg.params
    _reject_unknown(p, ("s", "n", "R"))
    pts = grid({"s": _number_list(p, "s", positive=True),
                "n": _number_list(p, "n", int, positive=True),
                "R": _number_list(p, "R", positive=True)})

    def point(s, n, R):
        rhs, _ = cp.max_transport_under_mi(cp.GaussianLaw(n), cp.GaussianLaw(n, s), R)
        h_gap = n * math.log(s)
        lhs = n / tau0(R / n) * math.exp(h_gap / n)
        return VerificationRecord("cor4", lhs, rhs, dict(s=s, n=n, R=R))

    return _records_table(sweep(point, pts), ("s", "n", "R"), cfg.tol)


SUITES: dict[str, Callable[[RunConfig], Table]] = {
    "e5": verify_e5,
    "thm1": verify_thm1,
    "thm5": verify_thm5,
    "cor4": verify_cor4_gaussian,
}

COMMANDS: dict[str, Callable[[RunConfig], Table]] = {
    "params": cmd_params,
    "ot": cmd_ot,
    "minmi": cmd_minmi,
    "ieps": cmd_ieps,
    "rem": cmd_rem,
    "tensor-fe": cmd_tensor_fe,
    "detect": cmd_detect,
    "tensorize": cmd_tensorize,
    **{f"verify-{k}": v for k, v in SUITES.items()},
}


def execute(cfg: RunConfig) -> Table:
    if cfg.subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {cfg.subcommand!r}")
    if not isinstance(cfg.params, dict):
        raise ConfigError("config must be a JSON object")
    if isinstance(cfg.tol, bool) or not isinstance(cfg.tol, (int, float)) or not cfg.tol >= 0:
        raise ConfigError("tol must be a nonnegative number")
    pool_size()  # reject a bad SMLAB_THREADS before any work starts
    return COMMANDS[cfg.subcommand](cfg)
