"""Recovery-error evaluation: permutation matching, robustness-bound
envelopes with fitted constants, and log-log scaling regression.

The two robustness envelopes are shape functions; the absolute constants in
front are unknown, so sweeps report a per-sweep fitted constant and the
tests check shape and scaling, never literal numeric bounds.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generate import Instance, assemble, gen_noise
from .norms import as_matrix, norm_12, sigma_r, spectral_norm
from .solver import SolverConfig, solve_minvol

__all__ = [
    "MatchResult",
    "match_permutation",
    "theorem1_envelope",
    "theorem2_envelope",
    "scaling_slope",
    "SweepRow",
    "SweepReport",
    "run_sweep",
]

BRUTE_FORCE_MAX_R = 8


@dataclass
class MatchResult:
    """Best column alignment of an estimate against a reference.

    permutation[i] is the estimate column matched to reference column i;
    err_W is the bottleneck value max_i ||w_ref_i - w_est_perm[i]||.
    """

    permutation: list
    err_W: float
    err_H: float | None = None


def _bottleneck_brute(cost: np.ndarray):
    r = cost.shape[0]
    best_perm, best_val = None, math.inf
    for perm in itertools.permutations(range(r)):
        val = float(cost[np.arange(r), perm].max())
        if val < best_val:
            best_val, best_perm = val, perm
    return list(best_perm), best_val


def _has_perfect_matching(allowed: np.ndarray) -> bool:
    """Kuhn's augmenting paths on the boolean matrix allowed[i, j]."""
    r = allowed.shape[0]
    match_col = [-1] * r

    def try_row(i, seen):
        for j in range(r):
            if allowed[i, j] and not seen[j]:
                seen[j] = True
                if match_col[j] < 0 or try_row(match_col[j], seen):
                    match_col[j] = i
                    return True
        return False

    for i in range(r):
        if not try_row(i, [False] * r):
            return False
    return True


def _bottleneck_threshold(cost: np.ndarray):
    """Bottleneck matching by bisection over the sorted cost values."""
    r = cost.shape[0]
    values = np.unique(cost)
    lo, hi = 0, values.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(cost <= values[mid]):
            hi = mid
        else:
            lo = mid + 1
    thr = values[lo]
    allowed = cost <= thr
    # lexicographically smallest perfect matching at the optimal threshold
    perm = [-1] * r
    taken = np.zeros(r, dtype=bool)
    for i in range(r):
        for j in range(r):
            if taken[j] or not allowed[i, j]:
                continue
            sub = np.delete(np.delete(allowed, list(range(i + 1)), axis=0),
                            np.nonzero(taken | (np.arange(r) == j))[0], axis=1)
            if sub.shape[0] == 0 or (sub.shape[0] == sub.shape[1] and _has_perfect_matching(sub)):
                perm[i] = j
                taken[j] = True
                break
        if perm[i] < 0:
            raise RuntimeError("threshold matching lost feasibility")
    return perm, float(thr)


def match_permutation(w_ref, w_est, h_ref=None, h_est=None) -> MatchResult:
    """Minimize max_i ||w_ref_i - w_est_perm[i]|| over permutations.

    Brute force for r <= 8, threshold bisection above; ties go to the
    lexicographically smallest permutation.  When both H factors are given
    the matched coefficient error norm_12((H_ref - H_est Pi)^T) is filled in.
    """
    wr = as_matrix(w_ref, "W_ref")
    we = as_matrix(w_est, "W_est")
    if wr.shape != we.shape:
        raise ValueError(f"shape mismatch: {wr.shape} vs {we.shape}")
    r = wr.shape[1]
    diff = wr[:, :, None] - we[:, None, :]
    cost = np.sqrt((diff * diff).sum(axis=0))  # cost[i, j] = ||wr_i - we_j||
    if r <= BRUTE_FORCE_MAX_R:
        perm, err = _bottleneck_brute(cost)
    else:
        perm, err = _bottleneck_threshold(cost)
    err_h = None
    if h_ref is not None and h_est is not None:
        hr = as_matrix(h_ref, "H_ref")
        he = as_matrix(h_est, "H_est")
        err_h = norm_12((hr - he[:, perm]).T)
    return MatchResult(perm, err, err_h)


def theorem1_envelope(r: int, p: float, eps: float, sigma_r_w: float, norm_w: float):
    """General-level robustness envelope (square-root regime).

    Returns (bound, eps_cap) with unit constants:

        bound   = norm_w * sqrt( eps * r^{7/2} p^2 / (sigma_r_w q^2 min(q^2-1, 1)) )
        eps_cap = (min(q, sqrt 2) - 1)^2 * sigma_r_w q^2 / (r^{9/2} p^2)

    Degenerate (raises) when q = sqrt(r - p^2) <= 1, i.e. p^2 >= r - 1.
    """
    q2 = r - p * p
    if q2 <= 1.0:
        raise ValueError("envelope degenerate: requires p^2 < r - 1")
    q = math.sqrt(q2)
    bound = norm_w * math.sqrt(eps * r**3.5 * p * p / (sigma_r_w * q2 * min(q2 - 1.0, 1.0)))
    eps_cap = (min(q, math.sqrt(2.0)) - 1.0) ** 2 * sigma_r_w * q2 / (r**4.5 * p * p)
    return bound, eps_cap


def theorem2_envelope(r: int, p: float, eps: float, sigma_r_w: float, norm_w_star: float):
    """Near-separable robustness envelope (linear regime).

    Returns (bound, eps_cap, p_cap) with unit constants:

        bound   = norm_w_star * ( r^{3/2} eps / sigma_r_w + r (p - 1) )
        eps_cap = sigma_r_w / r^{3/2}
        p_cap   = 1 + 1/r
    """
    bound = norm_w_star * (r**1.5 * eps / sigma_r_w + r * (p - 1.0))
    return bound, sigma_r_w / r**1.5, 1.0 + 1.0 / r


def scaling_slope(points):
    """OLS slope and standard error of log(err) against log(eps).

    Zero or negative errors are dropped with a warning; fewer than 4 usable
    points is an error.
    """
    pts = [(float(e), float(v)) for e, v in points]
    if any(e <= 0 for e, _ in pts):
        raise ValueError("all eps values must be positive")
    usable = [(e, v) for e, v in pts if v > 0]
    if len(usable) < len(pts):
        warnings.warn(f"dropped {len(pts) - len(usable)} nonpositive error values")
    if len(usable) < 4:
        raise ValueError("need at least 4 usable (eps, err) points")
    lx = np.log([e for e, _ in usable])
    ly = np.log([v for _, v in usable])
    lx = lx - lx.mean()
    slope = float((lx @ (ly - ly.mean())) / (lx @ lx))
    resid = (ly - ly.mean()) - slope * lx
    dof = len(usable) - 2
    stderr = float(math.sqrt((resid @ resid) / dof / (lx @ lx))) if dof > 0 else 0.0
    return slope, stderr


@dataclass
class SweepRow:
    eps: float
    err_W: float
    err_H: float
    feasible: bool
    env_t1: float
    env_t2: float
    cap_t1: float
    cap_t2: float
    runtime: float


@dataclass
class SweepReport:
    """Per-eps recovery errors with envelope columns and the fitted slope."""

    rows: list
    slope: float
    slope_stderr: float
    c_t1: float
    c_t2: float
    meta: dict = field(default_factory=dict)

    CSV_COLUMNS = ("eps", "err_W", "err_H", "feasible", "env_t1", "env_t2",
                   "cap_t1", "cap_t2", "runtime")

    def to_csv(self, path) -> Path:
        out = Path(path)
        with open(out, "w") as fh:
            fh.write(",".join(self.CSV_COLUMNS) + "\n")
            for row in self.rows:
                cells = [
                    f"{row.eps:.17g}", f"{row.err_W:.17g}", f"{row.err_H:.17g}",
                    "true" if row.feasible else "false",
                    f"{row.env_t1:.17g}", f"{row.env_t2:.17g}",
                    f"{row.cap_t1:.17g}", f"{row.cap_t2:.17g}",
                    f"{row.runtime:.6f}",
                ]
                fh.write(",".join(cells) + "\n")
        return out


def _row_seed(master_seed: int, eps_index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(eps_index)])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _sweep_one(w_sharp, h_sharp, level, eps, eps_index, master_seed, noise_mode, cfg):
    m, r = w_sharp.shape
    n = h_sharp.shape[0]
    t0 = time.perf_counter()
    noise = gen_noise(m, n, eps, mode=noise_mode, seed=_row_seed(master_seed, eps_index))
    inst = assemble(w_sharp, h_sharp, noise, level, eps, master_seed)
    res = solve_minvol(inst.X, r, eps, cfg)
    match = match_permutation(w_sharp, res.W_star, h_sharp, res.H_star)
    runtime = time.perf_counter() - t0

    srw = sigma_r(w_sharp, r)
    nw = spectral_norm(w_sharp)
    try:
        env1, cap1 = theorem1_envelope(r, level.p, eps, srw, nw)
    except ValueError:
        env1, cap1 = math.nan, math.nan
    env2, cap2, _ = theorem2_envelope(r, level.p, eps, srw, spectral_norm(res.W_star))
    return SweepRow(eps, match.err_W, match.err_H, res.feasible, env1, env2,
                    cap1, cap2, runtime)


def run_sweep(w_sharp, h_sharp, level, eps_list, master_seed: int = 0,
              noise_mode: str = "sphere", cfg: SolverConfig | None = None,
              threads: int = 1) -> SweepReport:
    """Solve one instance per eps at fixed factors, with fresh noise per row.

    The noise seed of row i derives deterministically from (master_seed, i),
    so reruns reproduce every row regardless of the thread count.  Rows of
    infeasible solves are kept in the report but excluded from the slope
    regression and the fitted constants.
    """
    w_sharp = as_matrix(w_sharp, "W")
    h_sharp = as_matrix(h_sharp, "H")
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValueError("eps list must contain at least 4 values")
    if max(eps_list) < 100.0 * min(eps_list):
        raise ValueError("eps list must span at least 2 decades")
    order = sorted(range(len(eps_list)), key=lambda i: eps_list[i])
    cfg = cfg or SolverConfig()

    args = [(w_sharp, h_sharp, level, eps_list[i], i, master_seed, noise_mode, cfg)
            for i in order]
    if threads and threads != 1:
        from concurrent.futures import ThreadPoolExecutor
        workers = None if threads == 0 else threads
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda a: _sweep_one(*a), args))
    else:
        rows = [_sweep_one(*a) for a in args]

    good = [(row.eps, row.err_W) for row in rows if row.feasible and row.err_W > 0]
    if len(good) >= 4:
        slope, stderr = scaling_slope(good)
    else:
        warnings.warn("too few feasible rows for a slope fit")
        slope, stderr = math.nan, math.nan

    def fitted_c(env_of):
        ratios = [row.err_W / env_of(row) for row in rows
                  if row.feasible and math.isfinite(env_of(row)) and env_of(row) > 0]
        return max(ratios) if ratios else math.nan

    report = SweepReport(rows, slope, stderr,
                         fitted_c(lambda row: row.env_t1),
                         fitted_c(lambda row: row.env_t2),
                         meta={"master_seed": master_seed, "noise_mode": noise_mode})
    return report
