"""Synthetic instances: controlled-spectrum W, scattered row-stochastic H,
bounded noise, and the assembled data matrix.

Everything is deterministic given the seed.  Instances serialize to a
directory bundle: meta.json plus X.csv, W.csv, H.csv, N.csv in plain
decimal CSV with 17 significant digits (lossless for doubles).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certify import check_hp_necessary, detect_separable, estimate_max_p, sample_boundary_points
from .geometry import PsscLevel, build_hp, plane_basis
from .norms import as_matrix, norm_12, sigma_r

__all__ = [
    "Instance",
    "gen_w",
    "gen_h",
    "gen_noise",
    "assemble",
    "save_bundle",
    "load_bundle",
]


@dataclass
class Instance:
    """A factorization problem (X, W, H, N) with its noise budget and level."""

    X: np.ndarray
    W_sharp: np.ndarray
    H_sharp: np.ndarray
    N_sharp: np.ndarray
    eps: float
    level: PsscLevel
    m: int
    n: int
    r: int
    seed: int
    gen_meta: dict = field(default_factory=dict)


def _orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, rmat = np.linalg.qr(rng.standard_normal((rows, cols)))
    # sign-fix so the factor is unique and runs reproduce bit-identically
    return q * np.sign(np.where(np.diag(rmat) == 0, 1.0, np.diag(rmat)))


def gen_w(m: int, r: int, sigma_profile=None, kappa: float | None = None,
          seed: int = 0) -> np.ndarray:
    """Random m x r basis with prescribed singular values.

    Either pass sigma_profile (descending positives) or a condition number
    kappa, expanded geometrically from 1 down to 1/kappa.  Orthonormal
    factors come from QR of seeded Gaussians, so the output is Haar-like
    and reproducible.
    """
    if m < r or r < 2:
        raise ValueError(f"need m >= r >= 2, got m={m}, r={r}")
    if sigma_profile is None:
        if kappa is None:
            raise ValueError("pass sigma_profile or kappa")
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        sigma = np.geomspace(1.0, 1.0 / kappa, r)
    else:
        sigma = np.asarray(sigma_profile, dtype=float)
        if sigma.shape != (r,) or (sigma <= 0).any():
            raise ValueError("sigma_profile must be r positive values")
        if (np.diff(sigma) > 0).any():
            raise ValueError("sigma_profile must be descending")
    rng = np.random.default_rng(seed)
    u = _orthonormal(rng, m, r)
    v = _orthonormal(rng, r, r)
    return (u * sigma) @ v.T


def _boundary_cap_rows(level: PsscLevel, k: int) -> np.ndarray:
    """k rows at equally spaced angles on the boundary of the cap.

    Along each direction the radius is capped at the simplex faces, so the
    rows trace the boundary of Q_p n Delta even when the ball pokes out.
    """
    r = level.r
    basis = plane_basis(r)
    center = level.center
    rho = level.cap_radius
    rows = np.empty((k, r))
    for i in range(k):
        theta = 2.0 * math.pi * i / k
        d = basis @ np.array([math.cos(theta), math.sin(theta)])
        t = rho
        for ci, di in zip(center, d):
            if di < 0:
                t = min(t, ci / -di)
        rows[i] = center + t * d
    return np.maximum(rows, 0.0)


def gen_h(n: int, level: PsscLevel, mode: str = "separable", seed: int = 0,
          n_boundary: int | None = None, dirichlet_alpha: float = 1.0):
    """Row-stochastic n x r matrix scattered at the requested level.

    Modes:

    * separable     -- first r rows are the unit vectors; certified level 1.
    * hp_anchored   -- first r rows are the anchor-matrix columns, then
                       n_boundary (default 4r) sampled cap-boundary rows;
                       guarantees the necessary condition at the level.
    * boundary_cap  -- r = 3 only; n_boundary equally spaced rows on the
                       cap boundary.

    Remaining rows are uniform on the simplex.  Returns (H, meta) where
    meta records the mode and the certified level: exact for r = 3, the
    necessary-condition method otherwise.
    """
    r = level.r
    if n < r:
        raise ValueError(f"need n >= r, got n={n}, r={r}")
    rng = np.random.default_rng(seed)
    meta: dict = {"mode": mode, "level_p": level.p}

    if mode == "separable":
        head = np.eye(r)
        meta["certified_p"] = 1.0
        meta["certify_method"] = "separable_scan"
    elif mode == "hp_anchored":
        k = 4 * r if n_boundary is None else int(n_boundary)
        if k < 0:
            raise ValueError("n_boundary must be nonnegative")
        k = min(k, n - r)
        boundary = sample_boundary_points(level, k, seed=int(rng.integers(2**63)))
        head = np.vstack([build_hp(level).T, boundary]) if boundary.size else build_hp(level).T
    elif mode == "boundary_cap":
        if r != 3:
            raise ValueError("boundary_cap mode requires r = 3")
        k = 64 if n_boundary is None else int(n_boundary)
        if k < 3:
            raise ValueError("boundary_cap needs at least 3 boundary rows")
        k = min(k, n)
        head = _boundary_cap_rows(level, k)
        meta["n_boundary"] = k
    else:
        raise ValueError(f"unknown mode {mode!r}")

    n_fill = n - head.shape[0]
    fill = rng.dirichlet(np.full(r, dirichlet_alpha), size=n_fill) if n_fill else np.empty((0, r))
    h = np.vstack([head, fill])

    if mode == "hp_anchored":
        cert = check_hp_necessary(h, level)
        meta["necessary_passes"] = cert.verdict == "necessary_only"
        if r == 3:
            meta["certified_p"] = estimate_max_p(h, mode="exact")
            meta["certify_method"] = "exact_facet"
        else:
            meta["certified_p"] = level.p
            meta["certify_method"] = "hp_feasibility"
    elif mode == "boundary_cap":
        meta["certified_p"] = estimate_max_p(h, mode="exact")
        meta["certify_method"] = "exact_facet"
    return h, meta


def gen_noise(m: int, n: int, eps: float, mode: str = "sphere", seed: int = 0) -> np.ndarray:
    """m x n noise with every column norm <= eps.

    sphere mode puts each column exactly on the radius-eps sphere; ball
    mode scales column j to radius eps * u_j^(1/m), the uniform-in-ball law.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0.0:
        return np.zeros((m, n))
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, n))
    norms = np.linalg.norm(g, axis=0)
    norms = np.where(norms > 1e-300, norms, 1.0)
    unit = g / norms
    if mode == "sphere":
        radii = np.full(n, eps)
    elif mode == "ball":
        radii = eps * rng.random(n) ** (1.0 / m)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return unit * radii


def assemble(w, h, noise, level: PsscLevel, eps: float, seed: int,
             gen_meta: dict | None = None) -> Instance:
    """Build and validate an Instance; every invariant is checked up front."""
    wm = as_matrix(w, "W")
    hm = as_matrix(h, "H")
    nm = as_matrix(noise, "N")
    m, r = wm.shape
    n = hm.shape[0]
    if hm.shape[1] != r:
        raise ValueError(f"invariant violated: H has {hm.shape[1]} columns, W has {r}")
    if nm.shape != (m, n):
        raise ValueError(f"invariant violated: N has shape {nm.shape}, expected {(m, n)}")
    if level.r != r:
        raise ValueError(f"invariant violated: level r={level.r} but W has r={r}")
    if hm.min() < 0.0:
        raise ValueError("invariant violated: H has negative entries")
    if np.abs(hm.sum(axis=1) - 1.0).max() > 1e-12:
        raise ValueError("invariant violated: H rows do not sum to 1 within 1e-12")
    noise_norm = norm_12(nm) if nm.size else 0.0
    if noise_norm > eps + 1e-14 * (1.0 + eps):
        raise ValueError(f"invariant violated: norm_12(N)={noise_norm} exceeds eps={eps}")
    if sigma_r(wm, r) <= 0.0:
        raise ValueError("invariant violated: W is rank deficient")
    x = wm @ hm.T + nm
    return Instance(x, wm, hm, nm, float(eps), level, m, n, r, int(seed),
                    dict(gen_meta or {}))


_CSV = {"X": "X.csv", "W": "W.csv", "H": "H.csv", "N": "N.csv"}


def save_bundle(inst: Instance, path) -> Path:
    """Write an instance bundle (meta.json + 4 CSVs) into directory *path*."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "m": inst.m,
        "n": inst.n,
        "r": inst.r,
        "p": inst.level.p,
        "eps": inst.eps,
        "seed": inst.seed,
        "modes": inst.gen_meta.get("modes", {}),
        "certified_p": inst.gen_meta.get("certified_p"),
        "gen_meta": inst.gen_meta,
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    arrays = {"X": inst.X, "W": inst.W_sharp, "H": inst.H_sharp, "N": inst.N_sharp}
    for key, fname in _CSV.items():
        np.savetxt(out / fname, arrays[key], fmt="%.17g", delimiter=",")
    return out


def load_bundle(path) -> Instance:
    """Read an instance bundle written by save_bundle."""
    src = Path(path)
    meta_file = src / "meta.json"
    if not meta_file.exists():
        raise FileNotFoundError(f"no meta.json under {src}")
    meta = json.loads(meta_file.read_text())
    arrays = {}
    for key, fname in _CSV.items():
        arrays[key] = np.loadtxt(src / fname, delimiter=",", ndmin=2)
    level = PsscLevel(int(meta["r"]), float(meta["p"]))
    gen_meta = dict(meta.get("gen_meta", {}))
    gen_meta.setdefault("certified_p", meta.get("certified_p"))
    return Instance(arrays["X"], arrays["W"], arrays["H"], arrays["N"],
                    float(meta["eps"]), level, int(meta["m"]), int(meta["n"]),
                    int(meta["r"]), int(meta["seed"]), gen_meta)
