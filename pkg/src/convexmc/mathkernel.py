"""Closed-form constants for the section / random-simplex moment comparisons.

Everything here is exact arithmetic on gamma-type factors.  The building
blocks are

    kappa(p)   = pi^{p/2} / Gamma(p/2 + 1)        (unit-ball volume, any real p >= 0)
    binom(q,k) = q (q-1) ... (q-k+1) / k!         (generalized binomial)
    b(q,k)     = binom(q,k) * [kappa_{q-k+1} ... kappa_q] / [kappa_1 ... kappa_k]

and the comparison constants assembled from them:

    linear:  C1(d,k,p) = (k!)^p * kappa_k^{d+p} / kappa_{d+p}^k * b(d+p,k) / b(d,k)
    affine:  C2(d,k,p) = (k!)^p * kappa_k^{d+p+1} / kappa_{d+p}^{k+1}
                         * kappa_{(k+1)(d+p)} / kappa_{k(d+p)+k} * b(d+p,k) / b(d,k)

C1 scales the k-point moment E|conv(0, X_1..X_k)|^p against the Haar mean of
|K cap L|^{d+p} over k-dimensional subspaces; C2 is the affine-flat
counterpart with k+1 points.  All products are accumulated in log space and
exponentiated once, because b(q, k) mixes huge Gamma values for q near 30.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LOG_PI = math.log(math.pi)

MAX_DIMENSION = 12


@dataclass(frozen=True)
class MomentParams:
    """Ambient dimension d, section/simplex dimension k, moment exponent p.

    Valid range: 1 <= k <= d <= 12 and p >= -d + k + 1 (the hypothesis under
    which the moment comparisons hold and every constant below is finite).
    At k = d that bound is p >= 1; p in [0, 1) is still accepted there
    because the constants remain well defined (the full-dimensional
    comparisons at p = 0 are trivial identities) and the constant-reduction
    suite evaluates them.
    """

    d: int
    k: int
    p: float

    def __post_init__(self):
        if not isinstance(self.d, int) or not isinstance(self.k, int):
            raise ValueError("d and k must be integers")
        if self.d < 1 or self.d > MAX_DIMENSION:
            raise ValueError(f"d must be in [1, {MAX_DIMENSION}], got {self.d}")
        if self.k < 1 or self.k > self.d:
            raise ValueError(f"k must be in [1, d], got k={self.k}, d={self.d}")
        p = float(self.p)
        if not math.isfinite(p):
            raise ValueError("p must be finite")
        low = 0.0 if self.k == self.d else -self.d + self.k + 1
        if p < low:
            raise ValueError(f"p must be >= {low} for k={self.k}, d={self.d}, got {p}")


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not x > 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


def log_kappa(p: float) -> float:
    """ln of the p-dimensional unit-ball volume, p >= 0."""
    if p < 0:
        raise ValueError(f"kappa requires p >= 0, got {p}")
    return 0.5 * p * LOG_PI - math.lgamma(0.5 * p + 1.0)


def kappa(p: float) -> float:
    """Volume pi^{p/2}/Gamma(p/2+1) of the unit ball in dimension p >= 0."""
    return math.exp(log_kappa(p))


def gen_binomial(q: float, k: int) -> float:
    """Generalized binomial q(q-1)...(q-k+1)/k! for real q, integer k >= 0."""
    if k < 0:
        raise ValueError("k must be a nonnegative integer")
    num = 1.0
    for i in range(k):
        num *= q - i
    return num / math.factorial(k)


def log_b_coeff(q: float, k: int) -> float:
    """ln b(q,k); requires q >= k >= 0 so every factor is positive."""
    if k < 0:
        raise ValueError("k must be a nonnegative integer")
    if q < k:
        raise ValueError(f"b coefficient requires q >= k, got q={q}, k={k}")
    out = -math.lgamma(k + 1.0)
    for i in range(k):
        out += math.log(q - i)
    for i in range(1, k + 1):
        out += log_kappa(q - k + i) - log_kappa(i)
    return out


def b_coeff(q: float, k: int) -> float:
    """b(q,k) = binom(q,k) * prod_{i=1..k} kappa_{q-k+i}/kappa_i."""
    return math.exp(log_b_coeff(q, k))


def thm1_constant(params: MomentParams) -> float:
    """Linear comparison constant C1(d,k,p).

    At p=0 it reduces to kappa_k^d/kappa_d^k; at k=1 to
    (d+p) 2^{d+p} / (d kappa_d); at k=d (where b(d,d)=1) to the
    random-simplex constant (d!)^p kappa_d^{d+p}/kappa_{d+p}^d * b(d+p,d).
    """
    d, k, p = params.d, params.k, float(params.p)
    logc = (
        p * math.lgamma(k + 1.0)
        + (d + p) * log_kappa(k)
        - k * log_kappa(d + p)
        + log_b_coeff(d + p, k)
        - log_b_coeff(d, k)
    )
    return math.exp(logc)


def thm2_constant(params: MomentParams) -> float:
    """Affine comparison constant C2(d,k,p).

    At p=0 it reduces to the affine-section constant
    kappa_k^{d+1} kappa_{d(k+1)} / (kappa_d^{k+1} kappa_{k(d+1)}); at k=d to
    the (k+1)-point simplex constant.
    """
    d, k, p = params.d, params.k, float(params.p)
    logc = (
        p * math.lgamma(k + 1.0)
        + (d + p + 1) * log_kappa(k)
        - (k + 1) * log_kappa(d + p)
        + log_kappa((k + 1) * (d + p))
        - log_kappa(k * (d + p) + k)
        + log_b_coeff(d + p, k)
        - log_b_coeff(d, k)
    )
    return math.exp(logc)


def prob_constants(params: MomentParams) -> tuple[float, float]:
    """(linear, affine) constants of the probabilistic formulations.

    The linear one equals thm1_constant.  The affine one,

        C'(k,p,d) = d! (k!)^{p-1} / (d-k)! * kappa_d/kappa_{d-k}
                    * kappa_k^{p+d} / kappa_{d+p}^{k+1}
                    * kappa_{(k+1)(d+p)} / kappa_{k(d+p)+k} * b(d+p,k)/b(d,k),

    scales |K|^{k+1}/V_{d-k}(K) times the (k+1)-point moment against the
    conditional section moment over hitting flats; it needs k < d (the
    intrinsic volume V_{d-k} divides through).  C'/C2 equals
    binom(d,k) kappa_d / (kappa_k kappa_{d-k}).
    """
    d, k, p = params.d, params.k, float(params.p)
    if k >= d:
        raise ValueError("the affine probabilistic constant requires k < d")
    logc = (
        math.lgamma(d + 1.0)
        - math.lgamma(d - k + 1.0)
        + (p - 1) * math.lgamma(k + 1.0)
        + log_kappa(d)
        - log_kappa(d - k)
        + (p + d) * log_kappa(k)
        - (k + 1) * log_kappa(d + p)
        + log_kappa((k + 1) * (d + p))
        - log_kappa(k * (d + p) + k)
        + log_b_coeff(d + p, k)
        - log_b_coeff(d, k)
    )
    return thm1_constant(params), math.exp(logc)


def _check_identity_params(d: int, p: float) -> None:
    if d < 1 or d > MAX_DIMENSION:
        raise ValueError(f"d must be in [1, {MAX_DIMENSION}], got {d}")
    if p < -d + 2:
        raise ValueError(f"p must be >= -d+2 = {-d + 2}, got {p}")


def linear_identity_constant(d: int, p: float) -> float:
    """Chord-moment constant (d+p) 2^{d+p} / (d kappa_d) for lines through 0.

    Equals thm1_constant at k=1 (reduction via the kappa duplication
    identity 2^{q+1} kappa_{2q} = (q+1) kappa_q kappa_{q+1}).
    """
    _check_identity_params(d, p)
    return math.exp(
        math.log(d + p) + (d + p) * math.log(2.0) - math.log(d) - log_kappa(d)
    )


def affine_identity_constants(d: int, p: float) -> tuple[float, float]:
    """Both candidate constants for the k=1 affine chord-moment identity.

    Returns (printed, doubled) where printed = (d+p)(d+p+1)/(2 d kappa_d) is
    the value as published and doubled = 2 * printed is the one consistent
    with the k=1 reduction of the affine comparison constant under the flat
    measure normalized so that flats hitting the unit ball have measure
    kappa_{d-k}.  The adjudication experiment measures which one holds;
    see estimators.identity_check.
    """
    _check_identity_params(d, p)
    printed = math.exp(
        math.log(d + p)
        + math.log(d + p + 1)
        - math.log(2.0)
        - math.log(d)
        - log_kappa(d)
    )
    return printed, 2.0 * printed
