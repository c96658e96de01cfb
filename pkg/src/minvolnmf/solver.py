"""Noise-constrained minimum-volume factorization solver.

Solves

    min det(W^T W)  s.t.  max_j ||x_j - W h_j|| <= eps,  h_j in Delta^r,

by SPA initialization and alternating minimization of the penalized
objective ||X - W H^T||_F^2 + lambda * logdet(W^T W + delta I), shrinking
lambda until the eps constraint is met.  The row subproblems are simplex-
constrained least squares solved by an accelerated projected gradient with
an exact sort-based simplex projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .norms import as_matrix, gram_volume, norm_12, singular_values

__all__ = [
    "SolverConfig",
    "SolveResult",
    "project_simplex",
    "project_simplex_rows",
    "simplex_ls",
    "simplex_ls_cols",
    "spa",
    "solve_minvol",
    "recover_h",
]


@dataclass
class SolverConfig:
    """Knobs of the continuation solver.

    lambda0 = None resolves at solve time to
    1e-2 * ||X||_F^2 / |logdet(W0^T W0 + delta I)|.
    """

    lambda0: float | None = None
    delta: float = 1e-8
    lambda_shrink: float = 0.5
    max_outer: int = 50
    max_alt: int = 500
    inner_tol: float = 1e-10
    feas_slack: float = 1e-9
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.lambda0 is not None and self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0.0 < self.lambda_shrink < 1.0:
            raise ValueError("lambda_shrink must lie in (0, 1)")
        if self.max_outer <= 0 or self.max_alt <= 0 or self.restarts <= 0:
            raise ValueError("iteration counts must be positive")
        if self.inner_tol <= 0 or self.feas_slack <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveResult:
    """Factor pair plus diagnostics; feasible means the eps constraint holds."""

    W_star: np.ndarray
    H_star: np.ndarray
    feasible: bool
    lambda_final: float
    volume: float
    residual_12: float
    iterations: dict
    objective_trace: list = field(default_factory=list)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a vector onto the unit simplex (sort-based)."""
    return project_simplex_rows(np.asarray(v, dtype=float)[None, :])[0]


def project_simplex_rows(v: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean projection onto the unit simplex."""
    n, r = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1)
    k = np.arange(1, r + 1)
    cond = u + (1.0 - css) / k > 0
    rho = r - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = (css[np.arange(n), rho] - 1.0) / (rho + 1)
    return np.maximum(v - tau[:, None], 0.0)


def _active_set_polish(gram, wx, h, max_rounds=None):
    """Exact KKT refinement of simplex least squares, per support pattern.

    For the support guessed from h, solves the equality-constrained normal
    equations and validates primal feasibility and the multiplier signs;
    validated columns are exact global optima.  Coordinates are dropped or
    added per column until validation or the round cap.  Returns (h, ok)
    where ok flags the certified columns; the rest keep their input values.
    """
    r, n = h.shape
    supp = h > 1e-10
    empty = supp.sum(axis=0) == 0
    if empty.any():
        supp[np.argmax(h[:, empty], axis=0), np.nonzero(empty)[0]] = True
    out = h.copy()
    ok = np.zeros(n, dtype=bool)
    pending = np.arange(n)
    rounds = max_rounds or 3 * r

    for _ in range(rounds):
        if pending.size == 0:
            break
        groups: dict[bytes, list] = {}
        for j in pending:
            groups.setdefault(supp[:, j].tobytes(), []).append(j)
        next_pending = []
        for key, cols in groups.items():
            cols = np.asarray(cols)
            mask = np.frombuffer(key, dtype=bool)
            idx = np.nonzero(mask)[0]
            s = idx.size
            kkt = np.zeros((s + 1, s + 1))
            kkt[:s, :s] = 2.0 * gram[np.ix_(idx, idx)]
            kkt[:s, s] = 1.0
            kkt[s, :s] = 1.0
            rhs = np.empty((s + 1, cols.size))
            rhs[:s] = 2.0 * wx[np.ix_(idx, cols)]
            rhs[s] = 1.0
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            hs, nu = sol[:s], sol[s]

            bad_primal = hs.min(axis=0) < -1e-12 if s > 1 else np.zeros(cols.size, bool)
            if bad_primal.any():
                drop = idx[np.argmin(hs[:, bad_primal], axis=0)]
                supp[drop, cols[bad_primal]] = False
                next_pending.extend(cols[bad_primal])
            keep = ~bad_primal
            if not keep.any():
                continue
            kc = cols[keep]
            full = np.zeros((r, kc.size))
            full[idx] = np.maximum(hs[:, keep], 0.0)
            full /= full.sum(axis=0)
            grad = 2.0 * (gram @ full - wx[:, kc])
            if s < r:
                off = ~mask
                slack = grad[off] + nu[keep]
                worst = slack.min(axis=0)
                scale = 1.0 + np.abs(grad).max(axis=0)
                bad_dual = worst < -1e-9 * scale
                if bad_dual.any():
                    add = np.nonzero(off)[0][np.argmin(slack[:, bad_dual], axis=0)]
                    supp[add, kc[bad_dual]] = True
                    next_pending.extend(kc[bad_dual])
                good = ~bad_dual
            else:
                good = np.ones(kc.size, bool)
            accept = kc[good]
            out[:, accept] = full[:, good]
            ok[accept] = True
        pending = np.asarray(next_pending, dtype=int)
    return out, ok


def simplex_ls_cols(w: np.ndarray, x: np.ndarray, tol: float = 1e-10,
                    max_iter: int = 2000, h0: np.ndarray | None = None,
                    polish: bool = True) -> np.ndarray:
    """Columns h_j in Delta^r minimizing ||x_j - W h_j|| for every column of x.

    Accelerated projected gradient with gradient-scheme restart, stopping
    when the worst gradient-mapping norm is <= tol, followed by an exact
    active-set refinement that leaves certified columns at their global
    optimum.
    """
    m, r = w.shape
    ncols = x.shape[1]
    gram = w.T @ w
    wx = w.T @ x
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    if lip <= 0.0:
        return np.full((r, ncols), 1.0 / r)
    step = 1.0 / lip

    if h0 is None:
        h = np.full((r, ncols), 1.0 / r)
    else:
        h = project_simplex_rows(h0.T).T
    y = h.copy()
    t = 1.0
    # the refinement finishes the job, so the gradient phase can stop early
    gap_target = max(tol, 1e-8) if polish else tol

    for it in range(max_iter):
        grad = 2.0 * (gram @ y - wx)
        h_new = project_simplex_rows((y - step * grad).T).T
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = h_new + ((t - 1.0) / t_new) * (h_new - h)
        restart = (grad * (h_new - h)).sum(axis=0) > 0.0
        if restart.any():
            y[:, restart] = h_new[:, restart]
        h, t = h_new, t_new

        if it % 8 == 7 or it == max_iter - 1:
            g = 2.0 * (gram @ h - wx)
            mapped = project_simplex_rows((h - step * g).T).T
            gap = np.linalg.norm(h - mapped, axis=0) / step
            if gap.max() <= gap_target:
                break

    if polish:
        h, _ = _active_set_polish(gram, wx, h)
    return h


def simplex_ls(w, x, tol: float = 1e-10, max_iter: int = 2000) -> np.ndarray:
    """Minimizer of ||x - W h||^2 over {h >= 0, sum(h) = 1}."""
    wm = as_matrix(w, "W")
    xv = np.asarray(x, dtype=float).reshape(-1)
    if xv.shape[0] != wm.shape[0]:
        raise ValueError(f"x has length {xv.shape[0]}, expected {wm.shape[0]}")
    return simplex_ls_cols(wm, xv[:, None], tol=tol, max_iter=max_iter)[:, 0]


def spa(x, r: int):
    """Successive projection: greedy column picks with orthogonal deflation.

    Returns (indices, W0) where W0 holds the selected original columns.
    Ties in the norm maximization go to the lowest index.
    """
    xm = as_matrix(x, "X")
    if r < 1 or r > min(xm.shape):
        raise ValueError(f"r={r} out of range for shape {xm.shape}")
    res = xm.copy()
    norms0 = (res * res).sum(axis=0)
    if norms0.max() <= 0.0:
        raise ValueError("degenerate input: all columns are zero")
    indices = []
    for _ in range(r):
        norms = (res * res).sum(axis=0)
        j = int(np.argmax(norms))
        if norms[j] <= 1e-24 * norms0.max():
            raise ValueError("input has numerical rank below r")
        indices.append(j)
        u = res[:, j] / math.sqrt(norms[j])
        res -= np.outer(u, u @ res)
    return indices, xm[:, indices].copy()


def _penalized_objective(x, w, ht, lam, delta):
    resid = x - w @ ht
    fit = float((resid * resid).sum())
    sign, logdet = np.linalg.slogdet(w.T @ w + delta * np.eye(w.shape[1]))
    return fit + lam * float(logdet), fit, float(logdet)


def _w_gradient(x, w, ht, lam, delta):
    inv = np.linalg.inv(w.T @ w + delta * np.eye(w.shape[1]))
    return -2.0 * (x - w @ ht) @ ht.T + 2.0 * lam * (w @ inv)


def _w_step(x, w, ht, lam, delta, n_steps: int = 5):
    """A few Armijo-backtracked gradient steps on the W block."""
    obj, _, _ = _penalized_objective(x, w, ht, lam, delta)
    hth_norm = float(np.linalg.eigvalsh(ht @ ht.T)[-1])
    for _ in range(n_steps):
        grad = _w_gradient(x, w, ht, lam, delta)
        gnorm2 = float((grad * grad).sum())
        if gnorm2 <= 1e-30:
            break
        eta = 1.0 / max(2.0 * hth_norm, 1e-12)
        accepted = False
        for _ in range(40):
            cand = w - eta * grad
            cobj, _, _ = _penalized_objective(x, cand, ht, lam, delta)
            if cobj <= obj - 1e-4 * eta * gnorm2:
                w, obj = cand, cobj
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
    return w, obj


def _solve_single(x, r, eps, cfg, w0):
    m, n = x.shape
    ht = simplex_ls_cols(w0, x, tol=cfg.inner_tol, max_iter=2000)
    w = w0.copy()

    if cfg.lambda0 is None:
        _, fit0, logdet0 = _penalized_objective(x, w, ht, 0.0, cfg.delta)
        lam = 1e-2 * float((x * x).sum()) / max(abs(logdet0), 0.1)
    else:
        lam = cfg.lambda0

    def feas_resid(wc, htc):
        return norm_12(x - wc @ htc)

    best = None  # (volume, W, H^T, lam, resid)
    resid = feas_resid(w, ht)
    if resid <= eps + cfg.feas_slack:
        best = (gram_volume(w), w.copy(), ht.copy(), lam, resid)
    closest = (resid, w.copy(), ht.copy(), lam)

    trace = []
    stages = 0
    alternations = 0
    stagnant = 0
    for outer in range(cfg.max_outer):
        stages += 1
        best_before = None if best is None else best[0]
        obj, _, _ = _penalized_objective(x, w, ht, lam, cfg.delta)
        stage_trace = [obj]
        for _ in range(cfg.max_alt):
            alternations += 1
            ht = simplex_ls_cols(w, x, tol=cfg.inner_tol, max_iter=120, h0=ht)
            w, obj_new = _w_step(x, w, ht, lam, cfg.delta)
            stage_trace.append(obj_new)

            resid = feas_resid(w, ht)
            if resid < closest[0]:
                closest = (resid, w.copy(), ht.copy(), lam)
            if resid <= eps + cfg.feas_slack:
                vol = gram_volume(w)
                if best is None or vol < best[0]:
                    best = (vol, w.copy(), ht.copy(), lam, resid)

            if abs(obj - obj_new) <= cfg.inner_tol * max(1.0, abs(obj)):
                obj = obj_new
                break
            obj = obj_new
        trace.append(stage_trace)

        if feas_resid(w, ht) <= eps + cfg.feas_slack:
            break
        # once some feasible iterate exists, stop after two volume-stagnant stages
        if best is not None:
            if best_before is not None and best[0] >= best_before - 1e-12 * max(1.0, best_before):
                stagnant += 1
                if stagnant >= 2:
                    break
            else:
                stagnant = 0
        lam *= cfg.lambda_shrink

    iterations = {"stages": stages, "alternations": alternations}
    if best is not None:
        vol, wb, htb, lamb, residb = best
        return SolveResult(wb, htb.T, True, lamb, vol, residb, iterations, trace)
    residc, wc, htc, lamc = closest
    return SolveResult(wc, htc.T, False, lamc, gram_volume(wc), residc, iterations, trace)


def solve_minvol(x, r: int, eps: float, cfg: SolverConfig | None = None) -> SolveResult:
    """Minimum-volume factorization under the max-column-norm residual cap.

    SPA picks the initial vertices; alternating descent on the penalized
    objective runs per penalty weight, and the weight shrinks whenever the
    eps constraint is still violated.  The feasible iterate with the
    smallest volume ever seen is returned; feasible=False means no penalty
    weight reached the target eps, which signals an unreachable target at
    this rank.  With restarts > 1 the initialization is perturbed by seeded
    relative noise and the best feasible volume wins.
    """
    xm = as_matrix(x, "X")
    if r < 2:
        raise ValueError("rank r must be >= 2")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    cfg = cfg or SolverConfig()

    _, w0 = spa(xm, r)
    results = []
    for k in range(cfg.restarts):
        if k == 0:
            winit = w0
        else:
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, k]))
            winit = w0 * (1.0 + 1e-2 * rng.standard_normal(w0.shape))
        results.append(_solve_single(xm, r, eps, cfg, winit))

    feasible = [res for res in results if res.feasible]
    if feasible:
        return min(feasible, key=lambda res: res.volume)
    return min(results, key=lambda res: res.residual_12)


def recover_h(w, x) -> np.ndarray:
    """Row-stochastic H fitted to a known basis: row i solves the simplex-
    constrained least squares against column x_i.
    """
    wm = as_matrix(w, "W")
    xm = as_matrix(x, "X")
    s = singular_values(wm)
    if s[-1] <= 1e-10 * s[0] or wm.shape[1] > wm.shape[0]:
        raise ValueError("recover_h requires full-rank W")
    return simplex_ls_cols(wm, xm, tol=1e-12, max_iter=5000).T
