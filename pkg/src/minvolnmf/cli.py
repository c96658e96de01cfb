"""Command-line front end: gen / certify / solve / sweep / report.

All commands are deterministic from their flags or a JSON config; summary
lines are key=value pairs.  Exit codes: 0 success or certified/necessary,
1 usage or missing files, 2 falsified, 3 inconclusive, 4 infeasible solve.
MINVOL_THREADS caps sweep parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .certify import certify_pssc_exact, check_hp_necessary, detect_separable, falsify_pssc_sampled
from .evaluate import match_permutation, run_sweep
from .generate import assemble, gen_h, gen_noise, gen_w, load_bundle, save_bundle
from .geometry import PsscLevel
from .norms import norm_12
from .solver import SolverConfig, solve_minvol

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FALSIFIED = 2
EXIT_INCONCLUSIVE = 3
EXIT_INFEASIBLE = 4

SWEEP_CONFIG_KEYS = {
    "m", "n", "r", "p", "mode", "kappa", "sigma_profile", "eps_list",
    "seed", "noise_mode", "n_boundary", "dirichlet_alpha", "out", "solver",
}
SOLVER_KEYS = {"lambda0", "delta", "lambda_shrink", "max_outer", "max_alt",
               "inner_tol", "feas_slack", "seed", "restarts"}


def _threads() -> int:
    raw = os.environ.get("MINVOL_THREADS", "1")
    try:
        return max(0, int(raw))
    except ValueError:
        return 1


def _solver_config(d: dict) -> SolverConfig:
    unknown = set(d) - SOLVER_KEYS
    if unknown:
        raise ValueError(f"unknown solver keys: {sorted(unknown)}")
    return SolverConfig(**d)


def cmd_gen(args) -> int:
    level = PsscLevel(args.r, args.p)
    w = gen_w(args.m, args.r, kappa=args.kappa, seed=args.seed)
    h, h_meta = gen_h(args.n, level, mode=args.mode, seed=args.seed + 1,
                      n_boundary=args.K)
    noise = gen_noise(args.m, args.n, args.eps, mode=args.noise_mode, seed=args.seed + 2)
    gen_meta = dict(h_meta)
    gen_meta["modes"] = {"h": args.mode, "noise": args.noise_mode}
    gen_meta["kappa"] = args.kappa
    if args.mode == "separable":
        gen_meta["separable_rows"] = detect_separable(h)
    inst = assemble(w, h, noise, level, args.eps, args.seed, gen_meta)
    out = save_bundle(inst, args.out)
    print(f"bundle={out} certified_p={gen_meta.get('certified_p')}")
    return EXIT_OK


def cmd_certify(args) -> int:
    inst = load_bundle(args.path)
    level = PsscLevel(inst.r, args.p if args.p is not None else inst.level.p)
    if args.method == "exact":
        cert = certify_pssc_exact(inst.H_sharp, level)
    elif args.method == "necessary":
        cert = check_hp_necessary(inst.H_sharp, level)
    elif args.method == "sampled":
        cert = falsify_pssc_sampled(inst.H_sharp, level, n_samples=args.samples,
                                    seed=args.seed)
    else:
        raise ValueError(f"unknown method {args.method!r}")
    print(json.dumps(cert.to_json(), indent=2, sort_keys=True))
    if cert.verdict in ("certified", "necessary_only"):
        return EXIT_OK
    if cert.verdict == "falsified":
        return EXIT_FALSIFIED
    return EXIT_INCONCLUSIVE


def cmd_solve(args) -> int:
    inst = load_bundle(args.path)
    eps = inst.eps if args.eps is None else args.eps
    cfg = SolverConfig(seed=args.seed, restarts=args.restarts)
    if args.lambda0 is not None:
        cfg.lambda0 = args.lambda0
    res = solve_minvol(inst.X, inst.r, eps, cfg)
    match = match_permutation(inst.W_sharp, res.W_star, inst.H_sharp, res.H_star)

    out = Path(args.out) if args.out else Path(args.path)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "W_star.csv", res.W_star, fmt="%.17g", delimiter=",")
    np.savetxt(out / "H_star.csv", res.H_star, fmt="%.17g", delimiter=",")
    diag = {
        "feasible": res.feasible,
        "lambda_final": res.lambda_final,
        "volume": res.volume,
        "residual_12": res.residual_12,
        "iterations": res.iterations,
        "eps": eps,
        "err_W": match.err_W,
        "err_H": match.err_H,
        "seed": args.seed,
        "restarts": args.restarts,
    }
    with open(out / "result.json", "w") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"feasible={str(res.feasible).lower()} volume={res.volume:.12g} "
          f"err_W={match.err_W:.12g} residual_12={res.residual_12:.12g} "
          f"lambda_final={res.lambda_final:.12g}")
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_sweep(args) -> int:
    cfg_data = {}
    if args.config:
        cfg_data = json.loads(Path(args.config).read_text())
        unknown = set(cfg_data) - SWEEP_CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out_dir = Path(args.out or cfg_data.get("out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    m = int(cfg_data.get("m", 10))
    n = int(cfg_data.get("n", 100))
    r = int(cfg_data.get("r", 3))
    p = float(cfg_data.get("p", 1.0))
    mode = cfg_data.get("mode", "separable")
    kappa = cfg_data.get("kappa", 3.0)
    profile = cfg_data.get("sigma_profile")
    eps_list = [float(e) for e in (args.eps or cfg_data.get("eps_list", []))]
    seed = int(cfg_data.get("seed", 0) if args.seed is None else args.seed)
    noise_mode = cfg_data.get("noise_mode", "sphere")
    solver_cfg = _solver_config(dict(cfg_data.get("solver", {})))

    if len(eps_list) < 4:
        raise ValueError("eps list must contain at least 4 values")
    if max(eps_list) < 100.0 * min(eps_list):
        raise ValueError("eps list must span at least 2 decades")

    level = PsscLevel(r, p)
    w = gen_w(m, r, sigma_profile=profile, kappa=None if profile else kappa, seed=seed)
    h, _ = gen_h(n, level, mode=mode, seed=seed + 1,
                 n_boundary=cfg_data.get("n_boundary"))
    report = run_sweep(w, h, level, eps_list, master_seed=seed,
                       noise_mode=noise_mode, cfg=solver_cfg, threads=_threads())
    csv_path = report.to_csv(out_dir / "sweep.csv")
    for row in report.rows:
        if not row.feasible:
            print(f"warning: infeasible row at eps={row.eps:g}, excluded from fit",
                  file=sys.stderr)
    print(f"csv={csv_path} slope={report.slope:.6g} stderr={report.slope_stderr:.6g} "
          f"c_t1={report.c_t1:.6g} c_t2={report.c_t2:.6g}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    feas = [row for row in rows if row["feasible"] == "true"]
    print(f"rows={len(rows)} feasible={len(feas)}")
    pts = [(float(row["eps"]), float(row["err_W"])) for row in feas
           if float(row["err_W"]) > 0]
    if len(pts) >= 4:
        from .evaluate import scaling_slope
        slope, stderr = scaling_slope(pts)
        print(f"slope={slope:.6g} stderr={stderr:.6g}")
    for row in rows:
        print(f"eps={row['eps']} err_W={row['err_W']} feasible={row['feasible']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minvolnmf",
                                     description="minimum-volume factorization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an instance bundle")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--r", type=int, required=True)
    g.add_argument("--p", type=float, default=1.0)
    g.add_argument("--mode", default="separable",
                   choices=["separable", "hp_anchored", "boundary_cap"])
    g.add_argument("--eps", type=float, default=0.0)
    g.add_argument("--noise-mode", default="sphere", choices=["sphere", "ball"])
    g.add_argument("--kappa", type=float, default=2.0)
    g.add_argument("--K", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("certify", help="certify the scattering level of a bundle")
    c.add_argument("path")
    c.add_argument("--p", type=float, default=None)
    c.add_argument("--method", default="exact",
                   choices=["exact", "necessary", "sampled"])
    c.add_argument("--samples", type=int, default=10000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("solve", help="solve a bundle")
    s.add_argument("path")
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--restarts", type=int, default=1)
    s.add_argument("--lambda0", type=float, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="eps sweep with envelope evaluation")
    w.add_argument("--config", default=None)
    w.add_argument("--eps", type=float, nargs="*", default=None)
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--out", default=None)
    w.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="summarize a sweep CSV")
    rep.add_argument("csv")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
