"""Per-(point, cluster) membership solver.

For a cluster with dispersion ``gamma`` and sparsity parameters ``(lam, p)``,
the optimal membership of a point at squared distance ``d`` is governed by

    f(u) = d + gamma*ln(u) + lam*p*u**(p-1),

the derivative of the per-term cost.  f has a unique minimum at

    u_hat = ((lam/gamma)*p*(1-p))**(1/(1-p))

and at most two roots in (0, 1].  When f(u_hat) < 0 the larger root u2 is
located by bisection on (u_hat, 1]; the membership is u2 if u2 is at least
the threshold u_min = (lam*(1-p)/gamma)**(1/(1-p)) and 0 otherwise.  The
threshold comparison is equivalent to a radius test d <= R^2 with

    R^2 = gamma/(1-p) * (-ln(lam*(1-p)/gamma) - p),

a quantity that depends only on (gamma, lam, p).  The d == R^2 boundary
takes the nonzero branch (closed ball).  With lam == 0 the solver reduces
to the closed form exp(-d/gamma): u_min = 0, u_max = 1 and the radius is
infinite, so every point keeps a positive membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidParameterError",
    "ClusterSolverContext",
    "build_context",
    "f_value",
    "solve_membership",
    "solve_membership_batch",
    "solve_membership_by_radius",
    "pcm2_membership",
    "radius_squared",
]

# Bisection budget used for the one-off u_max root when building a context.
# The per-point budget (default 30) bounds the hot path; the context is built
# once per cluster, so the bracket is collapsed to float precision instead.
_UMAX_BISECTION_ITERS = 80


class InvalidParameterError(ValueError):
    """Raised when (gamma, lam, p) give a nonpositive influence radius."""


@dataclass(frozen=True)
class ClusterSolverContext:
    """Precomputed per-cluster quantities for the membership solver.

    Attributes
    ----------
    u_hat : float
        Location of the unique minimum of f.
    u_min : float
        Smallest attainable nonzero membership.
    u_max : float
        Largest attainable nonzero membership (root of f at d = 0).
    radius_sq : float
        Squared influence radius; ``inf`` when ``lam == 0``.
    f_at_u_hat_d0 : float
        f(u_hat) evaluated at d = 0; f(u_hat) at distance d is this plus d.
    """

    gamma: float
    lam: float
    p: float
    u_hat: float
    u_min: float
    u_max: float
    radius_sq: float
    bisection_iters: int
    f_at_u_hat_d0: float


def radius_squared(gamma: float, lam: float, p: float) -> float:
    """Squared influence radius for the given parameters (inf for lam == 0)."""
    if lam == 0.0:
        return math.inf
    return (gamma / (1.0 - p)) * (-math.log(lam * (1.0 - p) / gamma) - p)


def f_value(u: float, d: float, ctx: ClusterSolverContext) -> float:
    """Cost derivative f(u) = d + gamma*ln(u) + lam*p*u**(p-1).

    Diverges to +inf as u -> 0+; raises for u <= 0.
    """
    if not u > 0:
        raise ValueError(f"f is only defined for u > 0, got {u}")
    return d + ctx.gamma * math.log(u) + ctx.lam * ctx.p * u ** (ctx.p - 1.0)


def build_context(
    gamma: float,
    lam: float,
    p: float,
    bisection_iters: int = 30,
) -> ClusterSolverContext:
    """Derive all per-cluster solver quantities from (gamma, lam, p).

    Raises
    ------
    InvalidParameterError
        If the squared influence radius is nonpositive, i.e. the parameters
        violate the positivity requirement lam*(1-p)/gamma < e**(-p)
        (equivalently K < p*e**(2*(1-p)) when lam is derived from K).
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not lam >= 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    if bisection_iters < 1:
        raise ValueError(f"bisection_iters must be >= 1, got {bisection_iters}")

    if lam == 0.0:
        return ClusterSolverContext(
            gamma=float(gamma),
            lam=0.0,
            p=float(p),
            u_hat=0.0,
            u_min=0.0,
            u_max=1.0,
            radius_sq=math.inf,
            bisection_iters=int(bisection_iters),
            f_at_u_hat_d0=-math.inf,
        )

    inv = 1.0 / (1.0 - p)
    u_hat = ((lam / gamma) * p * (1.0 - p)) ** inv
    u_min = (lam * (1.0 - p) / gamma) ** inv
    r_sq = radius_squared(gamma, lam, p)
    if not r_sq > 0:
        raise InvalidParameterError(
            f"nonpositive influence radius (R^2 = {r_sq}): gamma={gamma}, lam={lam}, p={p} "
            f"violate the radius-positivity bound lam*(1-p)/gamma < e^(-p) "
            f"(equivalently K < p*e^(2*(1-p)))"
        )
    f0 = gamma * math.log(u_hat) + lam * p * u_hat ** (p - 1.0)

    # u_max is the root of f at d = 0 on (u_hat, 1]; f(u_hat) = f0 < 0 there
    # and f(1) = lam*p > 0, so the bracket always straddles the root.
    lo, hi = u_hat, 1.0
    for _ in range(_UMAX_BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # bracket collapsed to float resolution
            break
        if gamma * math.log(mid) + lam * p * mid ** (p - 1.0) < 0.0:
            lo = mid
        else:
            hi = mid
    u_max = 0.5 * (lo + hi)

    return ClusterSolverContext(
        gamma=float(gamma),
        lam=float(lam),
        p=float(p),
        u_hat=u_hat,
        u_min=u_min,
        u_max=u_max,
        radius_sq=r_sq,
        bisection_iters=int(bisection_iters),
        f_at_u_hat_d0=f0,
    )


def _bisect_largest_root(d: np.ndarray, ctx: ClusterSolverContext) -> np.ndarray:
    """Largest root of f on (u_hat, 1] for each entry of d.

    Assumes f(u_hat) < 0 for every entry (caller filters); f is strictly
    increasing on that interval so plain bisection is exact and safe.
    """
    lo = np.full_like(d, ctx.u_hat)
    hi = np.ones_like(d)
    gamma, lam_p, pm1 = ctx.gamma, ctx.lam * ctx.p, ctx.p - 1.0
    for _ in range(ctx.bisection_iters):
        mid = 0.5 * (lo + hi)
        negative = d + gamma * np.log(mid) + lam_p * mid**pm1 < 0.0
        lo = np.where(negative, mid, lo)
        hi = np.where(negative, hi, mid)
    return 0.5 * (lo + hi)


def solve_membership_batch(d: np.ndarray, ctx: ClusterSolverContext) -> np.ndarray:
    """Vectorised two-branch membership update for an array of squared distances.

    Identical arithmetic to :func:`solve_membership` applied elementwise.
    """
    d = np.asarray(d, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("squared distances must be nonnegative")
    if ctx.lam == 0.0:
        return np.exp(-d / ctx.gamma)
    # f(1) = d + lam*p must be positive or the bracket is invalid; with
    # d >= 0 and lam > 0 this cannot happen, so treat it as internal corruption.
    if d.size and float(d.min()) + ctx.lam * ctx.p <= 0.0:
        raise RuntimeError("bisection bracket invalid at u = 1; solver state is inconsistent")
    out = np.zeros_like(d)
    has_roots = d + ctx.f_at_u_hat_d0 < 0.0
    if has_roots.any():
        roots = _bisect_largest_root(d[has_roots], ctx)
        out[has_roots] = np.where(roots >= ctx.u_min, roots, 0.0)
    return out


def solve_membership(d: float, ctx: ClusterSolverContext) -> float:
    """Optimal membership for a point at squared distance d.

    Returns the larger root of f when f(u_hat) < 0 and the root clears the
    u_min threshold; otherwise 0 (including the measure-zero f(u_hat) == 0
    case, where u_hat is the only root and the cost is minimised at 0).
    """
    return float(solve_membership_batch(np.array([d], dtype=np.float64), ctx)[0])


def solve_membership_by_radius(d: float, ctx: ClusterSolverContext) -> float:
    """Radius form of the update: the root if d <= R^2, else 0.

    Equivalent to :func:`solve_membership`; the threshold comparison on the
    root is replaced by the ball test, with the boundary d == R^2 kept on the
    nonzero branch.
    """
    if not d >= 0:
        raise ValueError(f"squared distance must be nonnegative, got {d}")
    if ctx.lam == 0.0:
        return float(np.exp(-d / ctx.gamma))
    if d > ctx.radius_sq:
        return 0.0
    return float(_bisect_largest_root(np.array([d], dtype=np.float64), ctx)[0])


def pcm2_membership(d, gamma: float):
    """Closed-form membership exp(-d/gamma) of the non-sparse (lam = 0) regime.

    Accepts a scalar or an array of squared distances.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    d = np.asarray(d, dtype=np.float64)
    if (d < 0).any():
        raise ValueError("squared distances must be nonnegative")
    out = np.exp(-d / gamma)
    return float(out) if out.ndim == 0 else out
