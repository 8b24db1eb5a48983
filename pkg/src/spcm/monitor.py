"""Fixed-point diagnostics for a terminated run.

A genuine fixed point (u*, theta*) of one cluster satisfies, over its active
points,

    sum_i u_i * (theta* - x_i) = 0        (representative stationarity)
    d_i + gamma*ln(u_i) + lam*p*u_i**(p-1) = 0   for every active i,

and the second-derivative matrix of the per-cluster cost, restricted to the
active coordinates (u_1..u_k, theta_1..theta_l), is

    [ diag(g_1..g_k)   2*(theta_q - x_iq) ]
    [   (symmetric)     2*sum_i(u_i)*I_l  ]      g_i = gamma/u_i - lam*p*(1-p)*u_i**(p-2)

(g_i = gamma/u_i when lam = 0).  This module assembles that matrix, tests
positive definiteness by attempting a Cholesky factorisation, samples the
quadratic form over a small valley around the fixed point (where the cost is
provably convex for a radius eps below 0.5*sqrt((1-p)*gamma/2), or
0.5*sqrt(gamma/2) when lam = 0), and checks the geometry: active points lie
inside the cluster's influence ball, inactive points outside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataSet, MembershipMatrix, ModelState, squared_distances
from .membership import radius_squared

__all__ = [
    "MonitorSettings",
    "FixedPointReport",
    "gradient_residual",
    "assemble_hessian",
    "epsilon_bound",
    "check_fixed_point",
    "weighted_cauchy_schwarz_holds",
]


@dataclass(frozen=True)
class MonitorSettings:
    """Tolerances and sampling budget for :func:`check_fixed_point`."""

    grad_tol: float = 1e-6
    ball_samples: int = 1000
    epsilon_factor: float = 0.99
    perturb_scale: float = 0.05
    cross_samples: int = 16
    seed: int = 7


@dataclass(frozen=True)
class FixedPointReport:
    """Outcome of every fixed-point check."""

    grad_norm: float
    grad_ok: bool
    hessian_ok: bool
    valley_ok: bool
    epsilon_bound: float
    active_counts: np.ndarray
    geometric_ok: bool
    per_cluster_hessian_ok: tuple[bool, ...]


def _membership_values(U) -> np.ndarray:
    return U.values if isinstance(U, MembershipMatrix) else np.asarray(U, dtype=np.float64)


def gradient_residual(X: DataSet, state: ModelState, U) -> float:
    """Largest stationarity violation across clusters.

    Per cluster this is the max of the representative equation residual
    (max norm of sum_i u_i*(theta - x_i)) and the largest |f(u_i)| over
    active points; it vanishes exactly at a fixed point.
    """
    values = _membership_values(U)
    d2 = squared_distances(X.points, state.representatives)
    worst = 0.0
    for j in range(state.n_clusters):
        col = values[:, j]
        active = col > 0
        if not active.any():
            raise ValueError(f"cluster {j} has no active points; residual undefined")
        u = col[active]
        theta_part = np.abs(u @ (state.representatives[j] - X.points[active])).max()
        f_vals = (
            d2[active, j]
            + state.gammas[j] * np.log(u)
            + state.lam * state.p * u ** (state.p - 1.0)
        )
        worst = max(worst, float(theta_part), float(np.abs(f_vals).max()))
    return worst


def assemble_hessian(X: DataSet, state: ModelState, U, cluster: int) -> np.ndarray:
    """Second-derivative matrix of one cluster's cost on its active block.

    Coordinates are the active memberships (in point-index order) followed by
    the representative components; shape (k+l, k+l).
    """
    values = _membership_values(U)
    active = np.nonzero(values[:, cluster] > 0)[0]
    k = active.size
    if k < 1:
        raise ValueError(f"cluster {cluster} has no active points")
    u = values[active, cluster]
    gamma = float(state.gammas[cluster])
    lam, p = state.lam, state.p
    theta = state.representatives[cluster]
    l = theta.size

    g = gamma / u - lam * p * (1.0 - p) * u ** (p - 2.0)
    H = np.zeros((k + l, k + l))
    H[np.arange(k), np.arange(k)] = g
    cross = 2.0 * (theta[None, :] - X.points[active])  # (k, l)
    H[:k, k:] = cross
    H[k:, :k] = cross.T
    H[k:, k:] = 2.0 * u.sum() * np.eye(l)
    return H


def epsilon_bound(state: ModelState, cluster: int) -> float:
    """Valley radius below which local convexity is guaranteed."""
    gamma = float(state.gammas[cluster])
    scale = (1.0 - state.p) if state.lam > 0 else 1.0
    return 0.5 * np.sqrt(scale * gamma / 2.0)


def _is_positive_definite(H: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(H)
        return True
    except np.linalg.LinAlgError:
        return False


def _valley_samples(
    X: DataSet,
    u_star: np.ndarray,
    theta_star: np.ndarray,
    active: np.ndarray,
    lo: float,
    hi: float,
    eps: float,
    n: int,
    scale: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (u', theta') pairs with u' in the attainable band and the
    weighted mean of u' within eps of theta*; theta' is that weighted mean."""
    pts = X.points[active]
    u_set = np.empty((0, u_star.size))
    th_set = np.empty((0, theta_star.size))
    step = scale
    while u_set.shape[0] < n and step > 1e-12:
        draw = max(n, 4 * (n - u_set.shape[0]))
        cand = u_star[None, :] * (1.0 + rng.uniform(-step, step, size=(draw, u_star.size)))
        cand = np.clip(cand, lo, hi)
        sums = cand.sum(axis=1)
        means = (cand @ pts) / sums[:, None]
        keep = np.linalg.norm(means - theta_star[None, :], axis=1) < eps
        u_set = np.vstack([u_set, cand[keep]])
        th_set = np.vstack([th_set, means[keep]])
        step *= 0.5
    return u_set[:n], th_set[:n]


def check_fixed_point(
    X: DataSet,
    state: ModelState,
    U,
    settings: MonitorSettings | None = None,
) -> FixedPointReport:
    """Run every diagnostic against a terminated state.

    Failures are report fields, never exceptions: the gradient residual and
    its tolerance flag, per-cluster Cholesky positive-definiteness, the
    sampled quadratic-form positivity over the convexity valley (both against
    the fixed-point matrix and against matrices assembled at sampled interior
    states, whose pairwise separation can reach twice the sampling radius),
    and the ball geometry of active/inactive points.
    """
    if settings is None:
        settings = MonitorSettings()
    values = _membership_values(U)
    rng = np.random.default_rng(settings.seed)

    grad = gradient_residual(X, state, U)
    d2 = squared_distances(X.points, state.representatives)

    per_cluster_pd: list[bool] = []
    valley_ok = True
    geometric_ok = True
    eps_values: list[float] = []
    counts = (values > 0).sum(axis=0)

    for j in range(state.n_clusters):
        active = np.nonzero(values[:, j] > 0)[0]
        u_star = values[active, j]
        theta_star = state.representatives[j]

        H = assemble_hessian(X, state, U, j)
        pd = _is_positive_definite(H)
        per_cluster_pd.append(pd)

        eps_j = settings.epsilon_factor * epsilon_bound(state, j)
        eps_values.append(epsilon_bound(state, j))

        # Axis directions: the diagonal of H must be positive.
        if (np.diag(H) <= 0).any():
            valley_ok = False

        # Quadratic form at sampled valley points against the fixed-point matrix.
        if state.lam > 0:
            lo = (state.lam * (1.0 - state.p) / float(state.gammas[j])) ** (1.0 / (1.0 - state.p))
            hi = 1.0
        else:
            lo, hi = 1e-12, 1.0
        u_samp, th_samp = _valley_samples(
            X, u_star, theta_star, active, lo, hi, eps_j,
            settings.ball_samples, settings.perturb_scale, rng,
        )
        Z = np.hstack([u_samp, th_samp])
        if settings.ball_samples > 0 and Z.shape[0] == 0:
            # no admissible sample: the state is too far from stationarity
            # for the valley to exist; never report a vacuous pass
            valley_ok = False
        if Z.shape[0]:
            forms = np.einsum("si,ij,sj->s", Z, H, Z)
            if (forms <= 0).any():
                valley_ok = False

        # Interior variant: matrices assembled at sampled states, probed with
        # other sampled points (separations up to twice the radius).
        n_cross = min(settings.cross_samples, u_samp.shape[0])
        for s in range(n_cross):
            mod_values = values.copy()
            mod_values[active, j] = u_samp[s]
            reps = state.representatives.copy()
            reps[j] = th_samp[s]
            state_s = ModelState(reps, state.gammas, state.lam, state.p)
            H_s = assemble_hessian(X, state_s, mod_values, j)
            probe = Z[rng.integers(0, Z.shape[0], size=min(8, Z.shape[0]))]
            if (np.einsum("si,ij,sj->s", probe, H_s, probe) <= 0).any():
                valley_ok = False

        # Geometry: active points inside the influence ball, inactive outside.
        r_sq = radius_squared(float(state.gammas[j]), state.lam, state.p)
        inactive = np.setdiff1d(np.arange(X.n_points), active)
        if (d2[active, j] > r_sq).any():
            geometric_ok = False
        if inactive.size and not (d2[inactive, j] > r_sq).all():
            geometric_ok = False

    return FixedPointReport(
        grad_norm=grad,
        grad_ok=grad < settings.grad_tol,
        hessian_ok=all(per_cluster_pd),
        valley_ok=valley_ok,
        epsilon_bound=float(min(eps_values)),
        active_counts=counts,
        geometric_ok=geometric_ok,
        per_cluster_hessian_ok=tuple(per_cluster_pd),
    )


def weighted_cauchy_schwarz_holds(u, u_prime, rtol: float = 1e-12) -> bool:
    """Whether (sum u')**2 <= (sum u) * (sum u'**2/u) for positive vectors.

    The inequality always holds mathematically (it is Cauchy-Schwarz applied
    to sqrt(u) and u'/sqrt(u)); ``rtol`` absorbs rounding in the equality
    case u' == u.
    """
    u = np.asarray(u, dtype=np.float64)
    u_prime = np.asarray(u_prime, dtype=np.float64)
    if u.shape != u_prime.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u_prime.shape}")
    if (u <= 0).any() or (u_prime <= 0).any():
        raise ValueError("both vectors must be strictly positive")
    lhs = float(u_prime.sum()) ** 2
    rhs = float(u.sum()) * float((u_prime**2 / u).sum())
    return lhs <= rhs * (1.0 + rtol)
