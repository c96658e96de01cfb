"""Closed-form geometry of the expanded scattering condition.

A scattering level p in [1, sqrt(r-1)] defines the cone

    C_p = { x >= 0 : sum(x) >= p * ||x|| },

whose cross-section in the unit-sum hyperplane is the cap Q_p n Delta^r,
a ball of radius sqrt(1/p^2 - 1/r) around the barycenter e/r intersected
with the simplex.  A row-stochastic H is p-scattered exactly when its row
hull contains that cap.  This module provides the cap, the anchor matrix
H_p whose columns sit where the segments barycenter->vertex cross the cone
boundary, closed forms for sigma_min(H_p) and ||H_p^{-1}||_1, membership
tests for C_p and its dual cone, and an exact support-function oracle over
the cap (active-set enumeration, cost 2^r, restricted to r <= 12).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PsscLevel",
    "QpBall",
    "plane_basis",
    "alpha_p",
    "build_hp",
    "hp_sigma_min",
    "hp_inv_norm1",
    "purity_from_p",
    "in_cone_cp",
    "support_qp_cap",
    "in_dual_cp",
    "sample_cap_points",
]

SUPPORT_MAX_R = 12


@dataclass(frozen=True)
class PsscLevel:
    """A scattering level: dimension r >= 2 and p in [1, sqrt(r)).

    q = sqrt(r - p^2) is derived, never set independently, so the triple
    (r, p, q) is always consistent.  The scattering regime is
    p <= sqrt(r-1); levels between sqrt(r-1) and sqrt(r) still describe a
    nonempty cap (a full ball inside the simplex) and are admitted so that
    purity levels of weakly scattered matrices remain representable.
    p = sqrt(r), where the cap degenerates to the barycenter, is rejected.
    """

    r: int
    p: float
    q: float = field(init=False)

    def __post_init__(self):
        r = int(self.r)
        p = float(self.p)
        if r < 2:
            raise ValueError(f"dimension r must be >= 2, got {r}")
        pmax = math.sqrt(r)
        if not (1.0 - 1e-12 <= p < pmax):
            raise ValueError(f"level p={p} outside [1, sqrt(r))=[1, {pmax}) for r={r}")
        p = max(p, 1.0)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", math.sqrt(r - p * p))

    @property
    def in_scattering_regime(self) -> bool:
        """True when p <= sqrt(r-1), the range with an SSC interpretation."""
        return self.p <= math.sqrt(self.r - 1) * (1 + 1e-12)

    @property
    def cap_radius(self) -> float:
        """Radius of Q_p in the unit-sum hyperplane."""
        return math.sqrt(max(1.0 / (self.p * self.p) - 1.0 / self.r, 0.0))

    @property
    def center(self) -> np.ndarray:
        """Barycenter e/r, the cap center."""
        return np.full(self.r, 1.0 / self.r)


@dataclass(frozen=True)
class QpBall:
    """The cap ball of a level: center e/r, radius sqrt(1/p^2 - 1/r)."""

    level: PsscLevel
    radius: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "radius", self.level.cap_radius)

    @property
    def center(self) -> np.ndarray:
        return self.level.center


def plane_basis(r: int) -> np.ndarray:
    """Orthonormal basis (r x (r-1)) of the zero-sum subspace {w : e^T w = 0}.

    Helmert construction; deterministic, columns orthonormal to rounding.
    """
    basis = np.zeros((r, r - 1))
    for k in range(1, r):
        basis[:k, k - 1] = 1.0
        basis[k, k - 1] = -float(k)
        basis[:, k - 1] /= math.sqrt(k * (k + 1))
    return basis


def alpha_p(level: PsscLevel) -> float:
    """Mixing weight of the anchor matrix: H_p = alpha*E + (1 - r*alpha)*I.

    alpha = (1/r) (1 - q / (p sqrt(r-1))); zero exactly at the separable
    level p = 1, where H_1 = I.
    """
    r, p, q = level.r, level.p, level.q
    return (1.0 - q / (p * math.sqrt(r - 1))) / r


def build_hp(level: PsscLevel) -> np.ndarray:
    """The r x r anchor matrix whose column i is the point where the segment
    from e/r to e_i crosses the cone boundary {sum(x) = p ||x||}.

    Every column v satisfies sum(v) = 1 and ||v|| = 1/p.
    """
    r = level.r
    a = alpha_p(level)
    return a * np.ones((r, r)) + (1.0 - r * a) * np.eye(r)


def hp_sigma_min(level: PsscLevel) -> float:
    """Smallest singular value of the anchor matrix: q / (p sqrt(r-1))."""
    return level.q / (level.p * math.sqrt(level.r - 1))


def hp_inv_norm1(level: PsscLevel) -> float:
    """Induced 1-norm of the anchor matrix inverse.

    Closed form (1/r) [ 2 (r-1)^{3/2} p/q - (r-2) ]; equals 1 at p = 1 and
    grows to 2r-3 as p approaches sqrt(r-1).
    """
    r, p, q = level.r, level.p, level.q
    return (2.0 * (r - 1) ** 1.5 * p / q - (r - 2)) / r


def purity_from_p(level: PsscLevel) -> float:
    """Uniform purity level gamma = 1/p implied by a scattering level."""
    return 1.0 / level.p


def in_cone_cp(x, level: PsscLevel, tol: float = 1e-12) -> bool:
    """Membership of x in C_p = {x >= 0 : sum(x) >= p ||x||} within tol."""
    v = np.asarray(x, dtype=float)
    if v.shape != (level.r,):
        raise ValueError(f"vector has shape {v.shape}, expected ({level.r},)")
    if v.min(initial=0.0) < -tol:
        return False
    return float(v.sum()) >= level.p * float(np.linalg.norm(v)) - tol


def support_qp_cap(a, level: PsscLevel, tol: float = 1e-12):
    """Exact maximum of a^T x over the cap {x in Delta^r : ||x - e/r|| <= rho}.

    Enumerates active sets S of zeroed coordinates.  Restricted to the face
    {x_S = 0}, the cap is a ball around e_T/|T| with squared radius

        rho^2 - |S|/r^2 - |T| (1/|T| - 1/r)^2,

    and the face maximizer is center + radius * (projected direction).
    Candidates violating nonnegativity on the free coordinates are skipped;
    they are covered by a larger active set.  Simplex vertices inside the
    cap are included as candidates as well.

    Returns (value, argmax).  A zero direction returns (0, center).
    """
    r = level.r
    if r > SUPPORT_MAX_R:
        raise ValueError(f"exact support oracle limited to r <= {SUPPORT_MAX_R}")
    d = np.asarray(a, dtype=float)
    if d.shape != (r,):
        raise ValueError(f"direction has shape {d.shape}, expected ({r},)")
    rho2 = level.cap_radius ** 2
    center = level.center

    best_val = float(d @ center)
    best_x = center.copy()

    idx = np.arange(r)
    for size_s in range(0, r):
        for s in itertools.combinations(range(r), size_s):
            mask = np.ones(r, dtype=bool)
            mask[list(s)] = False
            t = r - size_s
            rad2 = rho2 - size_s / r**2 - t * (1.0 / t - 1.0 / r) ** 2
            if rad2 < -1e-15:
                continue
            rad = math.sqrt(max(rad2, 0.0))
            x = np.zeros(r)
            x[mask] = 1.0 / t
            dt = d[mask]
            w = dt - dt.sum() / t
            nw = float(np.linalg.norm(w))
            if nw > 0.0:
                x[mask] += rad * w / nw
            if x[mask].min() < -tol:
                continue
            val = float(d @ x)
            if val > best_val:
                best_val, best_x = val, x

    # vertices of the simplex that lie inside the cap
    for j in idx:
        if (r - 1) / r**2 + (1.0 - 1.0 / r) ** 2 <= rho2 + tol:
            val = float(d[j])
            if val > best_val:
                best_val, best_x = val, np.eye(r)[j]

    return best_val, best_x


def in_dual_cp(y, level: PsscLevel, method: str = "exact", tol: float = 1e-12,
               n_samples: int = 10000, seed: int = 0) -> bool:
    """Membership of y in the dual cone C_p^* = S_q + R^r_+.

    Exact method: min over the cap of x^T y equals -support(-y); nonnegative
    within tol means membership.  The sampled method draws points in the cap
    and can only falsify; with no violating sample it returns True.
    """
    v = np.asarray(y, dtype=float)
    if v.shape != (level.r,):
        raise ValueError(f"vector has shape {v.shape}, expected ({level.r},)")
    if method == "exact":
        val, _ = support_qp_cap(-v, level)
        return val <= tol
    if method == "sampled":
        pts = sample_cap_points(level, n_samples, seed)
        return bool((pts @ v).min() >= -tol)
    raise ValueError(f"unknown method {method!r}")


def sample_cap_points(level: PsscLevel, n: int, seed: int = 0) -> np.ndarray:
    """n seeded points of the cap Q_p n Delta^r, rows of the result.

    Draws a uniform simplex point z and blends from the barycenter toward z,
    capping the step at the ball radius; the blend stays in the simplex by
    convexity and inside the ball by construction.
    """
    r = level.r
    rng = np.random.default_rng(seed)
    z = rng.dirichlet(np.ones(r), size=n)
    u = rng.random(n)
    c = level.center
    d = z - c
    dist = np.linalg.norm(d, axis=1)
    scale = np.where(dist > 0, np.minimum(1.0, level.cap_radius / np.maximum(dist, 1e-300)), 0.0)
    return c + (u * scale)[:, None] * d
