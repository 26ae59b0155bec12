"""exp(-t Delta) on eventually flat functions by truncated Taylor series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import ResourceError, ValidationError
from .flat import FlatFunction, check_topology, lp_norm
from .operator import LaplacianOp

DEFAULT_TERM_CAP = 200_000


@dataclass(frozen=True)
class SeriesPlan:
    t: float
    eps: float
    m: int  # substeps
    k: int  # truncation order per substep
    tau: float
    norm: float
    remainder: float  # certified sup-error bound

    @property
    def growth(self) -> int:
        """Support growth in combinatorial steps."""
        return self.m * self.k


def _log_remainder(m, fnorm, x, k):
    # log of m * fnorm * e^x * x^(k+1) / (k+1)!
    return math.log(m) + math.log(fnorm) + x + (k + 1) * math.log(x) - math.lgamma(k + 2)


def plan_series(norm: float, t: float, eps: float, fnorm: float = 1.0,
                term_cap: int = DEFAULT_TERM_CAP) -> SeriesPlan:
    """m = ceil(t ||Delta|| / 4) substeps, then the least k with
    m * fnorm * e^x x^(k+1)/(k+1)! <= eps where x = t ||Delta|| / m."""
    if not eps > 0:
        raise ValidationError("tolerance must be positive")
    if t < 0:
        raise ValidationError("time must be nonnegative")
    m = max(1, math.ceil(t * norm / 4.0))
    tau = t / m
    x = tau * norm
    if fnorm == 0 or x == 0:
        return SeriesPlan(t, eps, m, 0, tau, norm, 0.0)
    log_eps = math.log(eps)
    k = 0
    while _log_remainder(m, fnorm, x, k) > log_eps:
        k += 1
        if k * m > term_cap:
            raise ResourceError(
                f"series plan needs more than {term_cap} terms (t={t}, eps={eps}); "
                "use a larger tolerance or a smaller time")
    return SeriesPlan(t, eps, m, k, tau, norm, math.exp(_log_remainder(m, fnorm, x, k)))


def taylor_steps(region, x_ext: np.ndarray, tau: float, k: int, m: int, support: int) -> tuple:
    """Apply m substeps of the order-k Taylor polynomial of exp(-tau Delta)
    in place on the explicit rows of ``x_ext``. ``support`` is the depth
    beyond which x equals its tail constants. Returns (x_ext, new support)."""
    if k == 0:
        return x_ext, support
    for _ in range(m):
        limits = np.array([region.rows_through_depth(support + j) for j in range(1, k + 1)], dtype=np.int64)
        acc = _kernels.taylor_apply(region.indptr, region.indices, region.cond, region.rowidx,
                                    region.inv_mu, x_ext, tau, limits)
        x_ext[: region.n] = acc
        support += k
    return x_ext, support


def propagate(L: LaplacianOp, f: FlatFunction, t: float, eps: float = 1e-10,
              term_cap: int = DEFAULT_TERM_CAP):
    """Return (S(t) f, bound) with ||S(t) f - result||_inf <= bound <= eps."""
    check_topology(L.graph, f.graph)
    if t < 0:
        raise ValidationError("time must be nonnegative")
    if t == 0:
        return f, 0.0
    L.require_bounded()
    plan = plan_series(L.norm_inf, t, eps, lp_norm(f, math.inf), term_cap)
    return apply_plan(L, f, plan), plan.remainder


def apply_plan(L: LaplacianOp, f: FlatFunction, plan: SeriesPlan) -> FlatFunction:
    f = f.on_graph(L.graph)
    H = tuple(h + plan.growth for h in f.horizons)
    fe = f.expand(H)
    x = fe.extended().copy()
    support = max(f.horizons, default=-1)
    x, _ = taylor_steps(fe.region, x, plan.tau, plan.k, plan.m, support)
    return FlatFunction(L.graph, H, x[: fe.region.n], f.tails)


class KernelQuery(NamedTuple):
    t: float
    source: object  # v in S(t, u, v)
    target: object  # u
    tol: float = 1e-10


def heat_kernel(L: LaplacianOp, q: KernelQuery) -> float:
    """S(t, u, v) = (S(t) delta_v)(u) with u = target, v = source."""
    if not q.tol > 0:
        raise ValidationError("tolerance must be positive")
    out, _ = propagate(L, FlatFunction.delta(L.graph, q.source), q.t, q.tol)
    return float(out.evaluate(q.target)[0])


def heat_kernel_column(L: LaplacianOp, source, targets, t: float, tol: float = 1e-10):
    """S(t, u, source) for all u in ``targets`` from a single propagation."""
    out, bound = propagate(L, FlatFunction.delta(L.graph, source), t, tol)
    return [float(out.evaluate(u)[0]) for u in targets], bound


def decay_bound(L: LaplacianOp, t: float, k: int, mu_v: float, stirling: bool = False) -> float:
    """(1/mu_v) (t N)^k / k! e^(t N) with N = ||Delta||_inf; the Stirling
    variant is (e/mu_v) (e t N / k)^k e^(t N) and needs k >= 1."""
    N = L.norm_inf
    x = t * N
    if stirling:
        if k < 1:
            raise ValidationError("Stirling form needs k >= 1")
        if x == 0:
            return 0.0
        return math.exp(1.0 + k * math.log(math.e * x / k) + x) / mu_v
    if k == 0:
        return math.exp(x) / mu_v
    if x == 0:
        return 0.0
    return math.exp(k * math.log(x) - math.lgamma(k + 1) + x) / mu_v


class SeriesStepper:
    """Repeated S(delta) on one fixed region (used inside Picard loops).

    ``rel_tol`` bounds the per-application remainder relative to the sup
    norm of the input."""

    def __init__(self, L: LaplacianOp, delta: float, rel_tol: float):
        L.require_bounded()
        self.L = L
        self.plan = plan_series(L.norm_inf, delta, rel_tol, 1.0)
        self.growth = self.plan.growth
        self.region = None

    def bind(self, region):
        self.region = region
        return self

    def __call__(self, x_ext: np.ndarray, support: int):
        p = self.plan
        y = x_ext.copy()
        return taylor_steps(self.region, y, p.tau, p.k, p.m, support)
