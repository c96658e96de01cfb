"""Deciding and estimating the scattering level of a row-stochastic matrix.

Four checkers with strictly ranked power:

* detect_separable      -- scan for rows that are unit vectors (level 1).
* check_hp_necessary    -- anchor-matrix containment, a necessary condition
                           at any level and any dimension.
* certify_pssc_exact    -- exact cap containment for r in {2, 3} through
                           facet support comparisons.
* falsify_pssc_sampled  -- Monte Carlo boundary probing for any r; it can
                           refute containment but never prove it.

estimate_max_p bisects the chosen checker over [1, sqrt(r-1)], using that
containment is monotone in the level (the cap shrinks as p grows).
All verdicts carry the tolerance they were decided at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import PsscLevel, build_hp, plane_basis
from .norms import as_matrix
from .solver import simplex_ls_cols

__all__ = [
    "SscCertificate",
    "detect_separable",
    "check_hp_necessary",
    "certify_pssc_exact",
    "falsify_pssc_sampled",
    "estimate_max_p",
    "sample_boundary_points",
]

VERDICTS = ("certified", "necessary_only", "falsified", "inconclusive")
METHODS = ("separable_scan", "hp_feasibility", "exact_facet", "monte_carlo")


@dataclass
class SscCertificate:
    p_tested: float
    verdict: str
    method: str
    witness: np.ndarray | None = None
    residuals: np.ndarray | None = None
    samples_used: int = 0
    tol: float = 0.0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.verdict == "falsified" and self.witness is None:
            raise ValueError("falsified verdict requires a witness")
        if self.verdict == "certified" and self.method not in ("separable_scan", "exact_facet"):
            raise ValueError("certified verdict requires an exact method")

    def to_json(self) -> dict:
        return {
            "p_tested": self.p_tested,
            "verdict": self.verdict,
            "method": self.method,
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "residuals": None if self.residuals is None else [float(v) for v in self.residuals],
            "samples_used": int(self.samples_used),
            "tol": self.tol,
        }


def _check_rows(h) -> np.ndarray:
    hm = as_matrix(h, "H")
    if hm.shape[0] < 1 or hm.shape[1] < 2:
        raise ValueError(f"H must be n x r with r >= 2, got {hm.shape}")
    return hm


def detect_separable(h, tol: float = 1e-8):
    """Index set K with H[K, :] a permuted near-identity, or None.

    Each selected row is within tol (max norm) of a distinct unit vector.
    """
    hm = _check_rows(h)
    n, r = hm.shape
    if hm.min() < -tol or np.abs(hm.sum(axis=1) - 1.0).max() > max(tol, 1e-8):
        raise ValueError("H must be nonnegative with unit row sums")
    chosen = []
    used = set()
    for k in range(r):
        target = np.zeros(r)
        target[k] = 1.0
        hit = None
        for i in range(n):
            if i in used:
                continue
            if np.abs(hm[i] - target).max() <= tol:
                hit = i
                break
        if hit is None:
            return None
        used.add(hit)
        chosen.append(hit)
    return chosen


def _membership_residuals(hm: np.ndarray, points: np.ndarray, tol: float) -> np.ndarray:
    """Distance of each point (row) to the row hull conv(H^T)."""
    design = hm.T  # r x n, convex combinations of rows
    coef = simplex_ls_cols(design, points.T, tol=min(tol * 1e-2, 1e-10), max_iter=5000)
    return np.linalg.norm(design @ coef - points.T, axis=0)


def check_hp_necessary(h, level: PsscLevel, tol: float = 1e-8) -> SscCertificate:
    """Necessary condition: every anchor column must lie in the row hull."""
    hm = _check_rows(h)
    if hm.shape[1] != level.r:
        raise ValueError(f"H has r={hm.shape[1]} but level has r={level.r}")
    anchors = build_hp(level).T  # rows
    res = _membership_residuals(hm, anchors, tol)
    if res.max() <= tol:
        return SscCertificate(level.p, "necessary_only", "hp_feasibility",
                              residuals=res, tol=tol)
    worst = int(np.argmax(res))
    return SscCertificate(level.p, "falsified", "hp_feasibility",
                          witness=anchors[worst], residuals=res, tol=tol)


def _hull_2d(points: np.ndarray, merge_tol: float = 1e-12) -> np.ndarray:
    """Convex hull vertices of 2-D points, counterclockwise.

    Angular sort around the centroid followed by a convexity scan; points
    within merge_tol of each other are merged first.
    """
    kept = []
    for pnt in points:
        if all(np.abs(pnt - kq).max() > merge_tol for kq in kept):
            kept.append(pnt)
    pts = np.asarray(kept)
    if pts.shape[0] < 3:
        return pts
    centroid = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    order = np.lexsort((np.linalg.norm(pts - centroid, axis=1), ang))
    pts = pts[order]

    scale = max(float(np.abs(pts).max()), 1.0)
    area_tol = 1e-14 * scale * scale

    hull = []
    for pnt in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (b[0] - a[0]) * (pnt[1] - a[1]) - (b[1] - a[1]) * (pnt[0] - a[0])
            if cross <= area_tol:
                hull.pop()
            else:
                break
        hull.append(pnt)
    # close the scan across the wrap-around
    changed = True
    while changed and len(hull) > 2:
        changed = False
        for k in (len(hull) - 1, 0):
            a = hull[k - 1]
            b = hull[k]
            c = hull[(k + 1) % len(hull)]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= area_tol:
                hull.pop(k)
                changed = True
                break
    return np.asarray(hull)


def certify_pssc_exact(h, level: PsscLevel, tol: float = 1e-12) -> SscCertificate:
    """Exact cap-containment certificate for r in {2, 3}.

    r = 2: interval comparison on the segment.  r = 3: rows are mapped to
    the plane of zero-sum coordinates, the hull polygon is built, and the
    cap support value is compared against every edge offset.
    """
    from .geometry import support_qp_cap

    hm = _check_rows(h)
    r = level.r
    if hm.shape[1] != r:
        raise ValueError(f"H has r={hm.shape[1]} but level has r={level.r}")
    if r not in (2, 3):
        raise ValueError("exact certification limited to r <= 3")

    center = level.center
    rho = level.cap_radius

    if r == 2:
        u = np.array([1.0, -1.0]) / math.sqrt(2.0)
        reach = min(rho, 1.0 / math.sqrt(2.0))
        hi_cap = center + reach * u
        lo_cap = center - reach * u
        hi_rows = float(hm[:, 0].max())
        lo_rows = float(hm[:, 0].min())
        if hi_rows >= hi_cap[0] - tol and lo_rows <= lo_cap[0] + tol:
            return SscCertificate(level.p, "certified", "exact_facet", tol=tol)
        witness = hi_cap if hi_rows < hi_cap[0] - tol else lo_cap
        return SscCertificate(level.p, "falsified", "exact_facet", witness=witness, tol=tol)

    basis = plane_basis(3)
    plane_pts = (hm - center) @ basis
    hull = _hull_2d(plane_pts)

    if hull.shape[0] < 3:
        # flat hull cannot contain a disk of positive radius
        if hull.shape[0] == 2:
            d = hull[1] - hull[0]
            normal = np.array([d[1], -d[0]])
            normal /= np.linalg.norm(normal)
        else:
            normal = np.array([1.0, 0.0])
        _, arg = support_qp_cap(basis @ normal, level)
        return SscCertificate(level.p, "falsified", "exact_facet", witness=arg, tol=tol)

    nv = hull.shape[0]
    for k in range(nv):
        a2, b2 = hull[k], hull[(k + 1) % nv]
        d = b2 - a2
        normal = np.array([d[1], -d[0]])
        nn = float(np.linalg.norm(normal))
        if nn == 0.0:
            continue
        normal /= nn
        offset = float(normal @ a2)
        val, arg = support_qp_cap(basis @ normal, level)
        if val > offset + tol:
            return SscCertificate(level.p, "falsified", "exact_facet", witness=arg, tol=tol)
    return SscCertificate(level.p, "certified", "exact_facet", tol=tol)


def sample_boundary_points(level: PsscLevel, n: int, seed: int = 0,
                           max_attempts: int | None = None) -> np.ndarray:
    """Seeded points on the cap boundary inside the simplex, rows of result.

    Directions are uniform on the sphere of the zero-sum subspace; points
    with negative entries are rejected, which only happens for p^2 < r-1.
    Returns possibly fewer than n rows when the acceptance region is small.
    """
    r = level.r
    rng = np.random.default_rng(seed)
    rho = level.cap_radius
    center = level.center
    if max_attempts is None:
        max_attempts = max(200 * n, 10000)
    out = []
    drawn = 0
    batch = max(n, 256)
    while len(out) < n and drawn < max_attempts:
        g = rng.standard_normal((batch, r))
        drawn += batch
        w = g - g.mean(axis=1, keepdims=True)
        nw = np.linalg.norm(w, axis=1)
        ok = nw > 1e-12
        pts = center + rho * w[ok] / nw[ok, None]
        pts = pts[pts.min(axis=1) >= 0.0]
        out.extend(pts)
    return np.asarray(out[:n]).reshape(-1, r)


def falsify_pssc_sampled(h, level: PsscLevel, n_samples: int = 10000,
                         seed: int = 0, tol: float = 1e-8) -> SscCertificate:
    """Monte Carlo refutation of cap containment; never certifies.

    Simplex vertices lying in the cap are probed first (at the separable
    level the boundary meets the simplex only there, so rejection sampling
    alone would be blind).  Falsifies on the first probe whose distance to
    the row hull exceeds tol; otherwise the verdict is inconclusive.
    """
    hm = _check_rows(h)
    r = level.r
    if hm.shape[1] != r:
        raise ValueError(f"H has r={hm.shape[1]} but level has r={level.r}")

    vertex_dist2 = (r - 1) / r**2 + (1.0 - 1.0 / r) ** 2
    probes = []
    if vertex_dist2 <= level.cap_radius ** 2 + 1e-12:
        probes.append(np.eye(r))
    sampled = sample_boundary_points(level, n_samples, seed)
    if sampled.size:
        probes.append(sampled)
    if not probes:
        return SscCertificate(level.p, "inconclusive", "monte_carlo", samples_used=0, tol=tol)
    pts = np.vstack(probes)

    used = 0
    for start in range(0, pts.shape[0], 4096):
        chunk = pts[start:start + 4096]
        res = _membership_residuals(hm, chunk, tol)
        bad = np.nonzero(res > tol)[0]
        if bad.size:
            used += int(bad[0]) + 1
            return SscCertificate(level.p, "falsified", "monte_carlo",
                                  witness=chunk[bad[0]], samples_used=used, tol=tol)
        used += chunk.shape[0]
    return SscCertificate(level.p, "inconclusive", "monte_carlo", samples_used=used, tol=tol)


def estimate_max_p(h, mode: str = "exact", tol_p: float = 1e-6, tol: float | None = None) -> float:
    """Smallest level whose check passes, by bisection.

    Containment is monotone in the level (the cap shrinks as p grows), so a
    single pass/fail boundary exists.  mode 'exact' (r <= 3) bisects the
    facet certificate; mode 'necessary' bisects the anchor-matrix
    condition.  The search covers the full representable range [1, sqrt(r));
    values above sqrt(r-1) mean the matrix is not scattered at any level
    but still has a positive purity radius.  Raises when even the near-
    degenerate top of the range fails.
    """
    hm = _check_rows(h)
    r = hm.shape[1]
    if mode == "exact":
        if r > 3:
            raise ValueError("exact certification limited to r <= 3")
        def passes(p):
            return certify_pssc_exact(hm, PsscLevel(r, p),
                                      tol=1e-12 if tol is None else tol).verdict == "certified"
    elif mode == "necessary":
        def passes(p):
            return check_hp_necessary(hm, PsscLevel(r, p),
                                      tol=1e-8 if tol is None else tol).verdict == "necessary_only"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    lo, hi = 1.0, math.sqrt(r) * (1.0 - 1e-12)
    if passes(lo):
        return lo
    if not passes(hi):
        raise ValueError("not SSC-scattered at any tested level")
    while hi - lo > tol_p:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi
