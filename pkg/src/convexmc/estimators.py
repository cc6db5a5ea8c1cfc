"""Streaming Monte Carlo engine and the inequality / identity verifiers.

Each verifier estimates both sides of a moment comparison and renders a
statistically qualified verdict.  With r the lhs/rhs ratio and s its
standard error (delta method), the classification is

    Violation                r > 1 + 4s + eq_tol
    EqualityWithinTolerance  |r - 1| <= max(eq_tol, 3s)
    StrictInequality         r < 1 - 4s - eq_tol
    Inconclusive             otherwise

with eq_tol defaulting to 0.02.  These thresholds are fixed so that runs
classify reproducibly.  For negative moment exponents the point-tuple
integrand is heavy tailed; when the top 10 samples carry more than 20% of a
statistic's sum the standard error is unreliable and the verdict is forced
to Inconclusive rather than risking a false Violation.

Estimates are reproducible bit for bit given (seed, n) and the active
kernel backend: sample i always consumes the substream (seed, i), chunks
have a fixed size, and partial results merge in chunk order, so the worker
count never affects the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import _kernels as kernels
from .bodies import (
    Ball,
    ConvexBody,
    Ellipsoid,
    UnsupportedExactSectionError,
    _section_volume,
)
from .mathkernel import (
    MomentParams,
    affine_identity_constants,
    b_coeff,
    kappa,
    linear_identity_constant,
    prob_constants,
    thm1_constant,
    thm2_constant,
)
from .sampling import (
    RejectionStallError,
    derive_substream,
    flat_weight,
    fold_seed,
    sample_flats_batch,
    sample_grassmannian_batch,
    sample_points_batch,
)

CHUNK = 4096
TAIL_TOP = 10
TAIL_SHARE_LIMIT = 0.20
DEFAULT_EQ_TOL = 0.02

LINEAR_THEOREMS = ("thm1", "busemann", "busemann-simplex")
AFFINE_THEOREMS = ("thm2", "schneider", "blaschke-groemer")


class Verdict(str, Enum):
    EQUALITY = "EqualityWithinTolerance"
    STRICT = "StrictInequality"
    VIOLATION = "Violation"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class MCEstimate:
    """Mean and standard error of a statistic over n seeded samples."""

    mean: float
    std_error: float
    n: int
    seed: int
    minimum: float
    maximum: float
    tail_share: float | None = None

    def scaled(self, factor: float) -> "MCEstimate":
        """The estimate of factor * statistic (factor deterministic, > 0)."""
        return replace(
            self,
            mean=factor * self.mean,
            std_error=factor * self.std_error,
            minimum=factor * self.minimum,
            maximum=factor * self.maximum,
        )


@dataclass(frozen=True)
class InequalityReport:
    theorem: str
    params: MomentParams
    body: str
    lhs: MCEstimate
    rhs: MCEstimate
    constant: float
    ratio: float
    ratio_std_error: float
    verdict: Verdict
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class AffineIdentityResult:
    """Adjudication of the two candidate k=1 affine chord-moment constants."""

    report: InequalityReport
    fitted_constant: float
    fitted_std_error: float
    printed_constant: float
    doubled_constant: float
    printed_z: float
    doubled_z: float
    consistent: str  # "printed" | "doubled" | "both" | "neither"


# ---------------------------------------------------------------------------
# streaming engine


@dataclass
class _Acc:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    minimum: float = math.inf
    maximum: float = -math.inf
    total: float = 0.0
    top: np.ndarray = field(default_factory=lambda: np.empty(0))


def _acc_of_chunk(x: np.ndarray) -> _Acc:
    mean = float(np.mean(x))
    return _Acc(
        n=x.size,
        mean=mean,
        m2=float(np.sum((x - mean) ** 2)),
        minimum=float(np.min(x)),
        maximum=float(np.max(x)),
        total=float(np.sum(x)),
        top=np.sort(x)[max(0, x.size - TAIL_TOP) :],
    )


def _acc_merge(a: _Acc, b: _Acc) -> _Acc:
    if a.n == 0:
        return b
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / n
    top = np.sort(np.concatenate([a.top, b.top]))
    return _Acc(
        n=n,
        mean=mean,
        m2=m2,
        minimum=min(a.minimum, b.minimum),
        maximum=max(a.maximum, b.maximum),
        total=a.total + b.total,
        top=top[max(0, top.size - TAIL_TOP) :],
    )


def _chunk_ranges(n: int):
    return [(start, min(CHUNK, n - start)) for start in range(0, n, CHUNK)]


def _map_chunks(fn, n: int, seed: int, workers: int) -> list:
    ranges = _chunk_ranges(n)
    if workers <= 1 or len(ranges) <= 1:
        return [fn(seed, start, count) for start, count in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, seed, start, count) for start, count in ranges]
        return [f.result() for f in futures]


def _finish(acc: _Acc, n: int, seed: int) -> MCEstimate:
    se = math.sqrt(acc.m2 / (acc.n - 1) / acc.n) if acc.n >= 2 and acc.m2 > 0 else 0.0
    share = None
    if acc.minimum >= 0.0 and acc.total > 0.0:
        share = float(np.sum(acc.top)) / acc.total
    return MCEstimate(
        mean=acc.mean,
        std_error=se,
        n=n,
        seed=seed,
        minimum=acc.minimum,
        maximum=acc.maximum,
        tail_share=share,
    )


def mc_mean_batch(batch_fn, n: int, seed: int, workers: int = 1) -> MCEstimate:
    """Mean/SE of a batched statistic over samples 0..n-1 of the seed.

    batch_fn(seed, start, count) must return the statistic values of the
    sample-index range [start, start+count); the result is independent of
    chunking and worker count because merging is ordered by chunk index.
    """
    if n < 2:
        raise ValueError("need n >= 2 samples")
    chunks = _map_chunks(
        lambda s, start, count: _acc_of_chunk(np.asarray(batch_fn(s, start, count), float)),
        n,
        seed,
        workers,
    )
    acc = _Acc()
    for c in chunks:
        acc = _acc_merge(acc, c)
    return _finish(acc, n, seed)


def mc_mean(statistic, n: int, seed: int, workers: int = 1) -> MCEstimate:
    """mc_mean_batch for a per-sample closure statistic(stream) -> float."""

    def batch(s, start, count):
        return np.array(
            [statistic(derive_substream(s, start + j)) for j in range(count)]
        )

    return mc_mean_batch(batch, n, seed, workers)


@dataclass(frozen=True)
class PairedEstimate:
    """Joint mean/SE of two statistics sampled from the same streams."""

    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    cov: float
    n: int
    seed: int

    def ratio(self) -> tuple[float, float]:
        """mean_a / mean_b with its delta-method standard error."""
        r = self.mean_a / self.mean_b
        v = (self.var_a + r * r * self.var_b - 2.0 * r * self.cov) / self.n
        return r, math.sqrt(max(v, 0.0)) / abs(self.mean_b)


def mc_mean_pair(batch_fn, n: int, seed: int, workers: int = 1) -> PairedEstimate:
    """batch_fn returns (a_values, b_values); tracks their covariance."""
    if n < 2:
        raise ValueError("need n >= 2 samples")

    def chunk(s, start, count):
        a, b = batch_fn(s, start, count)
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        ma, mb = float(np.mean(a)), float(np.mean(b))
        return (
            a.size,
            ma,
            mb,
            float(np.sum((a - ma) ** 2)),
            float(np.sum((b - mb) ** 2)),
            float(np.sum((a - ma) * (b - mb))),
        )

    parts = _map_chunks(chunk, n, seed, workers)
    cn, ma, mb, m2a, m2b, c2 = 0, 0.0, 0.0, 0.0, 0.0, 0.0
    for bn, bma, bmb, bm2a, bm2b, bc2 in parts:
        if cn == 0:
            cn, ma, mb, m2a, m2b, c2 = bn, bma, bmb, bm2a, bm2b, bc2
            continue
        tot = cn + bn
        da, db = bma - ma, bmb - mb
        w = cn * bn / tot
        m2a += bm2a + da * da * w
        m2b += bm2b + db * db * w
        c2 += bc2 + da * db * w
        ma += da * bn / tot
        mb += db * bn / tot
        cn = tot
    return PairedEstimate(
        mean_a=ma,
        mean_b=mb,
        var_a=m2a / (cn - 1),
        var_b=m2b / (cn - 1),
        cov=c2 / (cn - 1),
        n=n,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# batched section volumes


def _normalized_halfspaces(body: ConvexBody):
    A, b = body.halfspaces()
    norms = np.linalg.norm(A, axis=1)
    return A / norms[:, None], b / norms


def _quadric_sections(body, U, y):
    center = body.center
    e = (center[None, :] - y) if y is not None else np.broadcast_to(center, (U.shape[0], body.d)).copy()
    sec = kernels.quadric_section_batch(U, e, body.shape_matrix(), kappa(U.shape[2]))
    return sec, sec > 0.0


def _polytope_sections(body, U, y, An, bn):
    n, d, k = U.shape
    A2 = np.einsum("md,ndk->nmk", An, U)
    b2 = np.broadcast_to(bn, (n, bn.shape[0])).copy()
    if y is not None:
        b2 = bn[None, :] - y @ An.T
    if k == 1:
        return kernels.interval_section_batch(A2[:, :, 0], b2)
    center, radius = body.bounding_ball()
    e = (center[None, :] - y) if y is not None else np.broadcast_to(center, (n, d)).copy()
    t0 = np.einsum("ndk,nd->nk", U, e)
    resid = np.einsum("nd,nd->n", e, e) - np.einsum("nk,nk->n", t0, t0)
    rad = np.sqrt(np.maximum(radius**2 - resid, 0.0))
    if k == 2:
        return kernels.polygon_section_batch(A2, b2, t0, rad)
    if k == 3:
        sec = np.empty(n)
        yy = np.zeros((n, d)) if y is None else y
        for i in range(n):
            sec[i] = _section_volume(body, U[i], yy[i])
        return sec, sec > 0.0
    raise UnsupportedExactSectionError(
        "exact polytope sections are implemented for k <= 3"
    )


def _mc_sections(body, U, y, seed, start, n_mc=8192):
    """Membership-counting fallback for k >= 4 polytope sections (biased
    through the outer power; only used when explicitly requested)."""
    n, d, k = U.shape
    center, radius = body.bounding_ball()
    e = (center[None, :] - y) if y is not None else np.broadcast_to(center, (n, d)).copy()
    t0 = np.einsum("ndk,nd->nk", U, e)
    resid = np.einsum("nd,nd->n", e, e) - np.einsum("nk,nk->n", t0, t0)
    rad = np.sqrt(np.maximum(radius**2 - resid, 0.0))
    sec = np.zeros(n)
    keys = kernels.stream_keys(fold_seed(seed, "section-mc"), start, n)
    yy = np.zeros((n, d)) if y is None else y
    for i in range(n):
        if rad[i] <= 0.0:
            continue
        ctrs = np.zeros(1, dtype=np.uint64)
        z = kernels.normal_block(keys[i : i + 1], ctrs, n_mc * k).reshape(n_mc, k)
        ctrs += np.uint64(kernels.normals_consumed(n_mc * k))
        u = kernels.uniform_block(keys[i : i + 1], ctrs, n_mc).reshape(n_mc)
        nrm = np.linalg.norm(z, axis=1)
        t = t0[i] + z * (rad[i] * u ** (1.0 / k) / np.where(nrm > 0, nrm, 1.0))[:, None]
        inside = body.contains_batch(t @ U[i].T + yy[i])
        sec[i] = kappa(k) * rad[i] ** k * np.mean(inside)
    return sec, sec > 0.0


def _sections_batch(body, U, y, *, seed=0, start=0, mc_fallback=False):
    """(volumes, nonempty) of body ∩ {span(U_i) + y_i}; y None means linear."""
    if body.shape_matrix() is not None:
        return _quadric_sections(body, U, y)
    An, bn = _normalized_halfspaces(body)
    try:
        return _polytope_sections(body, U, y, An, bn)
    except UnsupportedExactSectionError:
        if not mc_fallback:
            raise
        return _mc_sections(body, U, y, seed, start)


# ---------------------------------------------------------------------------
# statistic builders


def _linear_section_power_fn(body, k, q, mc_fallback=False):
    d = body.d

    def fn(seed, start, count):
        keys = kernels.stream_keys(seed, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        U = sample_grassmannian_batch(d, k, keys, ctrs)
        sec, _ = _sections_batch(
            body, U, None, seed=seed, start=start, mc_fallback=mc_fallback
        )
        return sec**q

    return fn


def _flat_section_power_fn(body, k, q, mc_fallback=False):
    w = flat_weight(body, k)

    def fn(seed, start, count):
        keys = kernels.stream_keys(seed, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        U, y = sample_flats_batch(body, k, keys, ctrs)
        sec, _ = _sections_batch(
            body, U, y, seed=seed, start=start, mc_fallback=mc_fallback
        )
        return w * sec**q  # sec = 0 on miss, so the hit indicator is implicit

    return fn


def _flat_hit_fn(body, k):
    w = flat_weight(body, k)

    def fn(seed, start, count):
        keys = kernels.stream_keys(seed, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        U, y = sample_flats_batch(body, k, keys, ctrs)
        _, nonempty = _sections_batch(body, U, y)
        return w * nonempty.astype(float)

    return fn


def _flat_pair_fn(body, k, q):
    w = flat_weight(body, k)

    def fn(seed, start, count):
        keys = kernels.stream_keys(seed, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        U, y = sample_flats_batch(body, k, keys, ctrs)
        sec, nonempty = _sections_batch(body, U, y)
        return w * sec**q, w * nonempty.astype(float)

    return fn


def _tuple_moment_fn(body, npts, p, about_origin):
    def fn(seed, start, count):
        keys = kernels.stream_keys(seed, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        pts = sample_points_batch(body, keys, ctrs, npts)
        if about_origin:
            vols = kernels.gram_volume_batch(pts)
        else:
            vols = kernels.gram_volume_batch(pts[:, 1:, :] - pts[:, :1, :])
        with np.errstate(divide="ignore"):
            return vols**p

    return fn


def _exact_estimate(value: float, n: int, seed: int) -> MCEstimate:
    return MCEstimate(
        mean=value, std_error=0.0, n=n, seed=seed, minimum=value, maximum=value
    )


# ---------------------------------------------------------------------------
# spec estimators


def estimate_lhs_linear(
    body: ConvexBody,
    params: MomentParams,
    n: int,
    seed: int,
    workers: int = 1,
    mc_section_fallback: bool = False,
) -> MCEstimate:
    """Mean of |K ∩ L|^{d+p} over Haar k-subspaces L."""
    d, k, p = params.d, params.k, params.p
    if body.d != d:
        raise ValueError("body dimension does not match params")
    if k >= d:
        raise ValueError("k = d is handled by exact_volume, not by sampling")
    fn = _linear_section_power_fn(body, k, d + p, mc_section_fallback)
    return mc_mean_batch(fn, n, seed, workers)


def estimate_rhs_linear(
    body: ConvexBody, params: MomentParams, n: int, seed: int, workers: int = 1
) -> MCEstimate:
    """thm1_constant * |K|^k * mean of |conv(0, X_1..X_k)|^p, X_i uniform."""
    d, k, p = params.d, params.k, params.p
    if body.d != d:
        raise ValueError("body dimension does not match params")
    scale = thm1_constant(params) * body.volume() ** k
    if p == 0:
        return _exact_estimate(scale, n, seed)
    est = mc_mean_batch(_tuple_moment_fn(body, k, p, True), n, seed, workers)
    return est.scaled(scale)


def estimate_lhs_affine(
    body: ConvexBody,
    params: MomentParams,
    n: int,
    seed: int,
    workers: int = 1,
    mc_section_fallback: bool = False,
) -> MCEstimate:
    """Mean of weight * hit * |K ∩ E|^{d+p+1} over affine-flat proposals."""
    d, k, p = params.d, params.k, params.p
    if body.d != d:
        raise ValueError("body dimension does not match params")
    if k >= d:
        raise ValueError("k = d is handled by exact_volume, not by sampling")
    fn = _flat_section_power_fn(body, k, d + p + 1, mc_section_fallback)
    return mc_mean_batch(fn, n, seed, workers)


def estimate_rhs_affine(
    body: ConvexBody, params: MomentParams, n: int, seed: int, workers: int = 1
) -> MCEstimate:
    """thm2_constant * |K|^{k+1} * mean of |conv(X_0..X_k)|^p."""
    d, k, p = params.d, params.k, params.p
    if body.d != d:
        raise ValueError("body dimension does not match params")
    scale = thm2_constant(params) * body.volume() ** (k + 1)
    if p == 0:
        return _exact_estimate(scale, n, seed)
    est = mc_mean_batch(_tuple_moment_fn(body, k + 1, p, False), n, seed, workers)
    return est.scaled(scale)


def crofton_intrinsic(
    body: ConvexBody, k: int, n: int, seed: int, workers: int = 1
) -> MCEstimate:
    """V_{d-k}(K) = binom(d,k) kappa_d/(kappa_k kappa_{d-k}) * mu(E hits K)."""
    d = body.d
    if not 1 <= k <= d - 1:
        raise ValueError(f"need 1 <= k <= d-1, got k={k}, d={d}")
    factor = math.comb(d, k) * kappa(d) / (kappa(k) * kappa(d - k))
    est = mc_mean_batch(_flat_hit_fn(body, k), n, seed, workers)
    return est.scaled(factor)


# ---------------------------------------------------------------------------
# verdicts and reports


def classify(ratio: float, ratio_se: float, eq_tol: float) -> Verdict:
    """The fixed verdict rule; no other code path sets a verdict."""
    if ratio > 1.0 + 4.0 * ratio_se + eq_tol:
        return Verdict.VIOLATION
    if abs(ratio - 1.0) <= max(eq_tol, 3.0 * ratio_se):
        return Verdict.EQUALITY
    if ratio < 1.0 - 4.0 * ratio_se - eq_tol:
        return Verdict.STRICT
    return Verdict.INCONCLUSIVE


def _ratio_of(lhs: MCEstimate, rhs: MCEstimate) -> tuple[float, float]:
    if not rhs.mean > 0:
        raise ValueError("rhs mean must be positive to form a ratio")
    r = lhs.mean / rhs.mean
    se = math.hypot(lhs.std_error / rhs.mean, r * rhs.std_error / rhs.mean)
    return r, se


def _heavy_tail_notes(p: float, *ests: MCEstimate) -> list[str]:
    notes = []
    if p < 0:
        notes.append("heavy-tail regime: p < 0")
        for e in ests:
            if e.tail_share is not None and e.tail_share > TAIL_SHARE_LIMIT:
                notes.append(
                    f"top-{TAIL_TOP} samples carry {e.tail_share:.0%} of a sum; "
                    "standard errors unreliable"
                )
    return notes


def _build_report(
    theorem, params, body, lhs, rhs, constant, eq_tol, notes=()
) -> InequalityReport:
    ratio, ratio_se = _ratio_of(lhs, rhs)
    verdict = classify(ratio, ratio_se, eq_tol)
    notes = list(notes)
    tail_notes = _heavy_tail_notes(params.p, lhs, rhs)
    if any("unreliable" in t for t in tail_notes):
        verdict = Verdict.INCONCLUSIVE
    notes.extend(tail_notes)
    return InequalityReport(
        theorem=theorem,
        params=params,
        body=body.describe() if isinstance(body, ConvexBody) else str(body),
        lhs=lhs,
        rhs=rhs,
        constant=constant,
        ratio=ratio,
        ratio_std_error=ratio_se,
        verdict=verdict,
        notes=tuple(notes),
    )


def _check_alias(theorem: str, params: MomentParams) -> None:
    if theorem in ("busemann", "schneider") and params.p != 0:
        raise ValueError(f"{theorem} requires p = 0")
    if theorem in ("busemann-simplex", "blaschke-groemer"):
        if params.k != params.d:
            raise ValueError(f"{theorem} requires k = d")
        if params.p < 1:
            raise ValueError(f"{theorem} requires p >= 1")


def verify(
    theorem: str,
    body: ConvexBody,
    params: MomentParams,
    n: int,
    seed: int,
    eq_tol: float = DEFAULT_EQ_TOL,
    workers: int = 1,
    mc_section_fallback: bool = False,
) -> InequalityReport:
    """Estimate both sides of a section/simplex moment comparison.

    theorem selects the family: thm1 (with aliases busemann at p=0 and
    busemann-simplex at k=d) compares Haar linear sections against origin
    simplices; thm2 (schneider, blaschke-groemer) compares affine sections
    against free simplices.  k = d routes the section side to the exact
    volume (the subspace/flat is all of R^d).
    """
    _check_alias(theorem, params)
    d, k = params.d, params.k
    seed_lhs, seed_rhs = fold_seed(seed, "lhs"), fold_seed(seed, "rhs")
    if theorem in LINEAR_THEOREMS:
        if k == d:
            lhs = _exact_estimate(body.volume() ** (d + params.p), n, seed_lhs)
        else:
            lhs = estimate_lhs_linear(
                body, params, n, seed_lhs, workers, mc_section_fallback
            )
        rhs = estimate_rhs_linear(body, params, n, seed_rhs, workers)
        constant = thm1_constant(params)
    elif theorem in AFFINE_THEOREMS:
        if k == d:
            lhs = _exact_estimate(body.volume() ** (d + params.p + 1), n, seed_lhs)
        else:
            lhs = estimate_lhs_affine(
                body, params, n, seed_lhs, workers, mc_section_fallback
            )
        rhs = estimate_rhs_affine(body, params, n, seed_rhs, workers)
        constant = thm2_constant(params)
    elif theorem in ("identity-linear", "identity-affine"):
        raise ValueError(f"{theorem} runs through identity_check(), not verify()")
    elif theorem in ("bp-linear", "bp-affine"):
        raise ValueError(f"{theorem} runs through bp_check(), not verify()")
    else:
        raise ValueError(f"unknown theorem id {theorem!r}")
    return _build_report(theorem, params, body, lhs, rhs, constant, eq_tol)


def identity_check(
    family: str,
    body: ConvexBody,
    d: int,
    p: float,
    n: int,
    seed: int,
    eq_tol: float = DEFAULT_EQ_TOL,
    workers: int = 1,
):
    """k = 1 chord-moment identity check.

    family="linear": chords through the origin against the |x|^p integral
    with the constant (d+p) 2^{d+p} / (d kappa_d); returns an
    InequalityReport (an identity for origin-symmetric bodies).

    family="affine": chord moments over hitting lines against the distance
    moment integral; both candidate constants (as printed and doubled) are
    scored and the result carries the fitted constant, the z-scores, and
    which candidate is consistent.  Returns an AffineIdentityResult whose
    report compares against the doubled (measure-consistent) candidate.
    """
    params = MomentParams(d, 1, p)
    if body.d != d:
        raise ValueError("body dimension does not match d")
    seed_lhs, seed_rhs = fold_seed(seed, "lhs"), fold_seed(seed, "rhs")
    if family == "linear":
        constant = linear_identity_constant(d, p)
        lhs = estimate_lhs_linear(body, params, n, seed_lhs, workers)
        scale = constant * body.volume()
        if p == 0:
            rhs = _exact_estimate(scale, n, seed_rhs)
        else:
            rhs = mc_mean_batch(
                _tuple_moment_fn(body, 1, p, True), n, seed_rhs, workers
            ).scaled(scale)
        return _build_report("identity-linear", params, body, lhs, rhs, constant, eq_tol)
    if family != "affine":
        raise ValueError(f"unknown identity family {family!r}")

    printed, doubled = affine_identity_constants(d, p)
    lhs = estimate_lhs_affine(body, params, n, seed_lhs, workers)
    base_scale = body.volume() ** 2
    if p == 0:
        base = _exact_estimate(base_scale, n, seed_rhs)
    else:
        base = mc_mean_batch(
            _tuple_moment_fn(body, 2, p, False), n, seed_rhs, workers
        ).scaled(base_scale)

    fitted = lhs.mean / base.mean
    fitted_se = _ratio_of(lhs, base)[1]
    zs = {}
    for name, cand in (("printed", printed), ("doubled", doubled)):
        r, se = _ratio_of(lhs, base.scaled(cand))
        zs[name] = (r, se, abs(r - 1.0) / se if se > 0 else math.inf * abs(r - 1.0))
    consistent = [
        name
        for name, (r, se, _) in zs.items()
        if abs(r - 1.0) <= max(eq_tol, 3.0 * se)
    ]
    label = {0: "neither", 1: consistent[0] if consistent else "", 2: "both"}[
        len(consistent)
    ]
    report = _build_report(
        "identity-affine",
        params,
        body,
        lhs,
        base.scaled(doubled),
        doubled,
        eq_tol,
        notes=(
            f"fitted constant {fitted:.6g} ± {fitted_se:.2g}",
            f"printed candidate z = {zs['printed'][2]:.1f}",
            f"doubled candidate z = {zs['doubled'][2]:.1f}",
        ),
    )
    return AffineIdentityResult(
        report=report,
        fitted_constant=fitted,
        fitted_std_error=fitted_se,
        printed_constant=printed,
        doubled_constant=doubled,
        printed_z=zs["printed"][2],
        doubled_z=zs["doubled"][2],
        consistent=label,
    )


# ---------------------------------------------------------------------------
# nested decomposition checks


def _tight_section_disks(body, U, yy):
    """Bounding disks (t0, rad) of the sections themselves, in flat
    coordinates.  Much tighter than restricting the body's bounding ball,
    which keeps the inner rejection acceptance away from zero."""
    n, d, k = U.shape
    M = body.shape_matrix()
    if M is not None:
        e = body.center[None, :] - yy
        MU = np.einsum("ab,nbk->nak", M, U)
        A = np.einsum("nak,nal->nkl", U, MU)
        Me = np.einsum("ab,nb->na", M, e)
        g = np.einsum("nak,na->nk", U, Me)
        q0 = np.einsum("na,na->n", e, Me)
        t0 = np.linalg.solve(A, g[:, :, None])[:, :, 0]
        s = np.maximum(1.0 - (q0 - np.einsum("nk,nk->n", g, t0)), 0.0)
        lam_min = np.linalg.eigvalsh(A)[:, 0]
        return t0, np.sqrt(s / lam_min)
    An, bn = _normalized_halfspaces(body)
    A2 = np.einsum("md,ndk->nmk", An, U)
    b2 = bn[None, :] - yy @ An.T
    t0 = np.zeros((n, k))
    rad = np.zeros(n)
    if k == 1:
        a = A2[:, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = b2 / a
        ub = np.min(np.where(a > 1e-12, ratio, np.inf), axis=1)
        lb = np.max(np.where(a < -1e-12, ratio, -np.inf), axis=1)
        good = np.isfinite(ub) & np.isfinite(lb) & (ub >= lb)
        t0[good, 0] = 0.5 * (ub + lb)[good]
        rad[good] = 0.5 * (ub - lb)[good]
        return t0, rad
    from .bodies import vertex_enumeration

    for i in range(n):
        verts = vertex_enumeration(A2[i], b2[i], check_bounded=False)
        if verts.shape[0] == 0:
            continue
        c = verts.mean(axis=0)
        t0[i] = c
        rad[i] = float(np.max(np.linalg.norm(verts - c, axis=1)))
    return t0, rad


def _sample_in_section(body, U, y, t0, rad, n_pts, inner_seed, index):
    """n_pts points uniform in the section, by rejection in its bounding
    disk using only the membership oracle.  Returns flat coordinates.

    Retries with a fresh substream on stall (never reweights); raises
    RejectionStallError after three fresh attempts.
    """
    k = U.shape[1]
    nc = kernels.normals_consumed(k)
    for attempt in range(3):
        seed = inner_seed if attempt == 0 else fold_seed(inner_seed, f"retry{attempt}")
        keys = kernels.stream_keys(seed, index, 1)
        ctrs = np.zeros(1, dtype=np.uint64)
        out = np.empty((n_pts, k))
        got = 0
        budget = max(MAX_INNER_PROPOSALS, 400 * n_pts)
        used = 0
        while got < n_pts and used < budget:
            block = min(max(2 * (n_pts - got), 512), 8192)
            z = kernels.normal_block(keys, ctrs, block * k).reshape(block, k)
            ctrs += np.uint64(kernels.normals_consumed(block * k))
            u = kernels.uniform_block(keys, ctrs, block).reshape(block)
            ctrs += np.uint64(block)
            nrm = np.linalg.norm(z, axis=1)
            t = t0 + z * (rad * u ** (1.0 / k) / np.where(nrm > 0, nrm, 1.0))[:, None]
            inside = body.contains_batch(t @ U.T + y)
            take = min(int(np.sum(inside)), n_pts - got)
            out[got : got + take] = t[inside][:take]
            got += take
            used += block
        if got == n_pts:
            return out
    raise RejectionStallError(
        f"section rejection sampler stalled (acceptance < {n_pts}/{budget})"
    )


MAX_INNER_PROPOSALS = 100_000


def bp_check(
    kind: str,
    body: ConvexBody,
    k: int,
    p: float,
    n_outer: int,
    n_inner: int,
    seed: int,
    eq_tol: float = DEFAULT_EQ_TOL,
    workers: int = 1,
) -> InequalityReport:
    """Nested-integral equality check of the subspace/flat decomposition.

    kind="linear" verifies

        ∫_{K^k} V0^p dx  =  (k!)^{d-k} b(d,k) E_L[ |K∩L|^k * E(V0^{p+d-k} | pts in K∩L) ]

    and kind="affine" the flat counterpart with k+1 points, |K∩E|^{k+1},
    and the weighted flat proposals.  The left side is a flat Monte Carlo
    over point tuples in K scaled by |K|^k (or |K|^{k+1}); the right side
    nests uniform sampling inside each section via rejection on the
    section's bounding disk.  Both sides must agree (EqualityWithinTolerance).
    """
    d = body.d
    if kind not in ("linear", "affine"):
        raise ValueError(f"unknown decomposition kind {kind!r}")
    if not 1 <= k <= d - 1:
        raise ValueError(f"need 1 <= k <= d-1, got k={k}, d={d}")
    if p < 0:
        raise ValueError("the decomposition check requires p >= 0")
    params = MomentParams(d, k, p)
    affine = kind == "affine"
    npts = k + 1 if affine else k
    inner_q = p + d - k
    constant = math.factorial(k) ** (d - k) * b_coeff(d, k)
    w = flat_weight(body, k) if affine else 1.0

    seed_lhs = fold_seed(seed, "bp.lhs")
    scale_lhs = body.volume() ** npts
    if p == 0:
        lhs = _exact_estimate(scale_lhs, n_outer, seed_lhs)
    else:
        lhs = mc_mean_batch(
            _tuple_moment_fn(body, npts, p, not affine), n_outer, seed_lhs, workers
        ).scaled(scale_lhs)

    seed_rhs = fold_seed(seed, "bp.rhs")
    inner_seed = fold_seed(seed, "bp.inner")

    def fn(s, start, count):
        keys = kernels.stream_keys(s, start, count)
        ctrs = np.zeros(count, dtype=np.uint64)
        if affine:
            U, y = sample_flats_batch(body, k, keys, ctrs)
        else:
            U = sample_grassmannian_batch(d, k, keys, ctrs)
            y = None
        sec, _ = _sections_batch(body, U, y)
        yy = np.zeros((count, d)) if y is None else y
        t0, rad = _tight_section_disks(body, U, yy)
        out = np.zeros(count)
        for i in range(count):
            if sec[i] <= 0.0:
                continue
            pts = _sample_in_section(
                body, U[i], yy[i], t0[i], rad[i], n_inner * npts, inner_seed, start + i
            ).reshape(n_inner, npts, k)
            if affine:
                vols = kernels.gram_volume_batch(pts[:, 1:, :] - pts[:, :1, :])
            else:
                vols = kernels.gram_volume_batch(pts)
            out[i] = w * sec[i] ** npts * float(np.mean(vols**inner_q))
        return out

    rhs = mc_mean_batch(fn, n_outer, seed_rhs, workers).scaled(constant)
    return _build_report(
        f"bp-{kind}",
        params,
        body,
        lhs,
        rhs,
        constant,
        eq_tol,
        notes=(f"n_inner={n_inner}",),
    )


# ---------------------------------------------------------------------------
# probabilistic form


def verify_probabilistic(
    theorem: str,
    body: ConvexBody,
    params: MomentParams,
    n: int,
    seed: int,
    eq_tol: float = DEFAULT_EQ_TOL,
    workers: int = 1,
) -> InequalityReport:
    """The conditional-expectation form of the comparisons.

    For the linear family the probability measure is already the Haar one,
    so this delegates to verify().  For the affine family the left side is
    the section moment conditioned on hitting flats and the right side is
    C'(k,p,d) |K|^{k+1} / V_{d-k}(K) times the point moment, with
    V_{d-k} estimated by the flat-measure (Crofton) estimator; the verdict
    is Inconclusive if that estimate's SE exceeds 1% of its mean.
    """
    if theorem in LINEAR_THEOREMS:
        report = verify(theorem, body, params, n, seed, eq_tol, workers)
        return replace(report, notes=report.notes + ("probabilistic form = Haar form",))
    if theorem not in AFFINE_THEOREMS:
        raise ValueError(f"unknown theorem id {theorem!r}")
    d, k, p = params.d, params.k, params.p
    if body.d != d:
        raise ValueError("body dimension does not match params")
    if k >= d:
        raise ValueError("the probabilistic affine form requires k < d")
    cprime = prob_constants(params)[1]

    pair = mc_mean_pair(
        _flat_pair_fn(body, k, d + p + 1), n, fold_seed(seed, "plhs"), workers
    )
    lhs_mean, lhs_se = pair.ratio()
    lhs = MCEstimate(
        mean=lhs_mean,
        std_error=lhs_se,
        n=n,
        seed=fold_seed(seed, "plhs"),
        minimum=math.nan,
        maximum=math.nan,
    )

    vdk = crofton_intrinsic(body, k, n, fold_seed(seed, "crofton"), workers)
    seed_rhs = fold_seed(seed, "rhs")
    if p == 0:
        moment = _exact_estimate(1.0, n, seed_rhs)
    else:
        moment = mc_mean_batch(
            _tuple_moment_fn(body, k + 1, p, False), n, seed_rhs, workers
        )
    rhs_mean = cprime * body.volume() ** (k + 1) / vdk.mean * moment.mean
    rel = math.hypot(
        vdk.std_error / vdk.mean,
        moment.std_error / moment.mean if moment.mean > 0 else 0.0,
    )
    rhs = MCEstimate(
        mean=rhs_mean,
        std_error=rhs_mean * rel,
        n=n,
        seed=seed_rhs,
        minimum=math.nan,
        maximum=math.nan,
        tail_share=moment.tail_share,
    )
    notes = [
        "probabilistic form (conditional section moment)",
        f"V_(d-k) estimate {vdk.mean:.6g} ± {vdk.std_error:.2g}",
    ]
    report = _build_report(theorem, params, body, lhs, rhs, cprime, eq_tol, notes)
    if vdk.std_error > 0.01 * vdk.mean:
        report = replace(
            report,
            verdict=Verdict.INCONCLUSIVE,
            notes=report.notes + ("intrinsic-volume estimate too noisy (SE > 1%)",),
        )
    return report
