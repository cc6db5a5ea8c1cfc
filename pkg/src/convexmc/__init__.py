"""Monte Carlo verification lab for section and random-simplex moment
inequalities over convex bodies.

Closed-form constants live in mathkernel, geometry in bodies, seeded
randomness in sampling, the verification procedures in estimators, and the
command-line front end in cli.  The hot kernels have a compiled backend
with a pure-NumPy fallback selected at import (see convexmc._kernels).
"""

__version__ = "0.1.0"

from ._kernels import active_backend
from .bodies import (
    AffineFlat,
    Ball,
    Box,
    ConvexBody,
    Ellipsoid,
    HPolytope,
    LinearSubspace,
    Simplex,
    contains,
    exact_volume,
    gram_volume_affine,
    gram_volume_origin,
    projection_membership,
    section_volume_affine,
    section_volume_linear,
    vertex_enumeration,
)
from .estimators import (
    InequalityReport,
    MCEstimate,
    Verdict,
    bp_check,
    crofton_intrinsic,
    estimate_lhs_affine,
    estimate_lhs_linear,
    estimate_rhs_affine,
    estimate_rhs_linear,
    identity_check,
    mc_mean,
    verify,
    verify_probabilistic,
)
from .mathkernel import (
    MomentParams,
    affine_identity_constants,
    b_coeff,
    gen_binomial,
    kappa,
    linear_identity_constant,
    log_gamma,
    prob_constants,
    thm1_constant,
    thm2_constant,
)
from .sampling import (
    RandomStream,
    WeightedFlat,
    derive_substream,
    fold_seed,
    sample_affine_flat,
    sample_grassmannian,
    sample_uniform_in_body,
)
