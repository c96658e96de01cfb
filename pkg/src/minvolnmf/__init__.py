"""Minimum-volume factorization under bounded column noise, with the
expanded scattering condition: geometry, certification, synthetic
instances, the continuation solver, and robustness-envelope evaluation.
"""

from .certify import (
    SscCertificate,
    certify_pssc_exact,
    check_hp_necessary,
    detect_separable,
    estimate_max_p,
    falsify_pssc_sampled,
)
from .evaluate import (
    MatchResult,
    SweepReport,
    SweepRow,
    match_permutation,
    run_sweep,
    scaling_slope,
    theorem1_envelope,
    theorem2_envelope,
)
from .generate import Instance, assemble, gen_h, gen_noise, gen_w, load_bundle, save_bundle
from .geometry import (
    PsscLevel,
    QpBall,
    alpha_p,
    build_hp,
    hp_inv_norm1,
    hp_sigma_min,
    in_cone_cp,
    in_dual_cp,
    purity_from_p,
    support_qp_cap,
)
from .norms import (
    gram_volume,
    norm_12,
    norm_1_induced,
    pseudoinverse,
    sigma_r,
    spectral_norm,
)
from .solver import (
    SolveResult,
    SolverConfig,
    project_simplex,
    recover_h,
    simplex_ls,
    solve_minvol,
    spa,
)

__version__ = "0.1.0"
