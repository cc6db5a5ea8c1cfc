"""Convex bodies with exact volumes, membership tests, and flat sections.

The body variants are Ball, Ellipsoid, Box, Simplex and HPolytope; every
variant knows its exact volume, a bounding ball, and (except the quadrics)
a halfspace representation Ax <= b.  Sections by linear subspaces and
affine flats are exact: closed form for quadrics, and interval / polygon /
3-polytope computations in flat coordinates for the polytopal variants
(section dimension k <= 3; higher k raises UnsupportedExactSectionError and
the Monte Carlo callers fall back to a membership oracle).

All types are immutable after construction and safe for concurrent use.
"""

from __future__ import annotations

import itertools
import json
import math

import numpy as np

from . import _kernels as kernels
from ._simplex import lp_feasible, solve_lp
from .mathkernel import MAX_DIMENSION, kappa

DEDUP_TOL = 1e-9  # vertex dedup / feasibility slack, max norm
_ORTHO_TOL = 1e-10


class DimensionMismatchError(ValueError):
    pass


class UnsupportedExactVolumeError(NotImplementedError):
    """Exact volume is only implemented for general H-polytopes up to d=4."""


class UnsupportedExactSectionError(NotImplementedError):
    """Exact polytope sections are only implemented for k <= 3."""


class UnboundedPolytopeError(ValueError):
    pass


def _as_vector(x, d: int, what: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (d,):
        raise DimensionMismatchError(f"{what} must have shape ({d},), got {v.shape}")
    return v


class ConvexBody:
    """Base class: a compact convex set with non-empty interior in R^d."""

    d: int

    def contains_batch(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> bool:
        x = _as_vector(x, self.d, "point")
        return bool(self.contains_batch(x[None])[0])

    def volume(self) -> float:
        raise NotImplementedError

    def bounding_ball(self) -> tuple[np.ndarray, float]:
        """(center, radius) of a ball containing the body (not minimal)."""
        raise NotImplementedError

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(A, b) with body = {x : Ax <= b}, or None for the quadric variants."""
        return None

    def shape_matrix(self) -> np.ndarray | None:
        """(center-form) SPD matrix M with body = {x : (x-c)'M(x-c) <= 1}."""
        return None

    def describe(self) -> str:
        raise NotImplementedError


class Ball(ConvexBody):
    def __init__(self, center, radius: float, d: int | None = None):
        if d is None:
            d = len(np.atleast_1d(np.asarray(center, dtype=float)))
        if d < 1 or d > MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
        self.d = d
        self.center = _as_vector(center, d, "center")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    @classmethod
    def unit(cls, d: int) -> "Ball":
        return cls(np.zeros(d), 1.0)

    def contains_batch(self, pts):
        diff = np.asarray(pts, dtype=float) - self.center
        return np.einsum("nd,nd->n", diff, diff) <= self.radius**2

    def volume(self):
        return kappa(self.d) * self.radius**self.d

    def bounding_ball(self):
        return self.center, self.radius

    def shape_matrix(self):
        return np.eye(self.d) / self.radius**2

    def describe(self):
        c = "" if not self.center.any() else f",center={self.center.tolist()}"
        return f"ball:r={self.radius:g}{c}"


class Ellipsoid(ConvexBody):
    """{x : (x-c)' M (x-c) <= 1} for symmetric positive-definite M."""

    def __init__(self, center, M):
        M = np.asarray(M, dtype=float)
        d = M.shape[0]
        if M.shape != (d, d):
            raise DimensionMismatchError("shape matrix must be square")
        if d < 1 or d > MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
        if np.max(np.abs(M - M.T)) > 1e-10 * (1.0 + np.max(np.abs(M))):
            raise ValueError("shape matrix must be symmetric")
        self.d = d
        self.center = _as_vector(center, d, "center")
        self.M = 0.5 * (M + M.T)
        try:
            chol = np.linalg.cholesky(self.M)
        except np.linalg.LinAlgError:
            raise ValueError("shape matrix must be positive definite") from None
        self._sqrt_det = float(np.prod(np.diag(chol)))
        # x = c + T z maps the unit ball onto the ellipsoid
        self.ball_transform = np.linalg.solve(chol, np.eye(d)).T
        self._M_inv = self.ball_transform @ self.ball_transform.T
        self._max_semiaxis = math.sqrt(float(np.linalg.eigvalsh(self._M_inv)[-1]))

    @classmethod
    def from_semiaxes(cls, axes, center=None) -> "Ellipsoid":
        axes = np.asarray(axes, dtype=float)
        if np.any(axes <= 0):
            raise ValueError("semi-axes must be positive")
        if center is None:
            center = np.zeros(len(axes))
        return cls(center, np.diag(1.0 / axes**2))

    def contains_batch(self, pts):
        diff = np.asarray(pts, dtype=float) - self.center
        q = np.einsum("nd,de,ne->n", diff, self.M, diff)
        return q <= 1.0

    def volume(self):
        return kappa(self.d) / self._sqrt_det

    def bounding_ball(self):
        return self.center, self._max_semiaxis

    def shape_matrix(self):
        return self.M

    def describe(self):
        return f"ellipsoid:d={self.d}"


class Box(ConvexBody):
    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        d = lower.shape[0]
        if d < 1 or d > MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
        if upper.shape != (d,):
            raise DimensionMismatchError("lower/upper shape mismatch")
        if not np.all(lower < upper):
            raise ValueError("box requires lower < upper componentwise")
        self.d = d
        self.lower = lower
        self.upper = upper

    @classmethod
    def centered(cls, half: float, d: int) -> "Box":
        h = float(half) * np.ones(d)
        return cls(-h, h)

    def contains_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def volume(self):
        return float(np.prod(self.upper - self.lower))

    def bounding_ball(self):
        c = 0.5 * (self.lower + self.upper)
        return c, float(np.linalg.norm(0.5 * (self.upper - self.lower)))

    def halfspaces(self):
        eye = np.eye(self.d)
        return np.vstack([eye, -eye]), np.concatenate([self.upper, -self.lower])

    def describe(self):
        return f"box:bounds={';'.join(f'{l:g},{u:g}' for l, u in zip(self.lower, self.upper))}"


class Simplex(ConvexBody):
    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1] + 1:
            raise DimensionMismatchError("simplex needs d+1 vertices in R^d")
        d = V.shape[1]
        if d < 1 or d > MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
        self.d = d
        self.vertices = V
        edges = V[1:] - V[0]
        vol = kernels.gram_volume_batch(edges[None])[0]
        if not vol > 0:
            raise ValueError("simplex vertices are affinely dependent")
        self._volume = float(vol)
        self._edge_inv = np.linalg.inv(edges.T)  # barycentric solve
        self._hrep = self._facets()

    @classmethod
    def standard(cls, d: int) -> "Simplex":
        return cls(np.vstack([np.zeros(d), np.eye(d)]))

    def _facets(self):
        V, d = self.vertices, self.d
        rows, offs = [], []
        for i in range(d + 1):
            others = np.delete(V, i, axis=0)
            if d == 1:
                n = np.ones(1)
            else:
                E = others[1:] - others[0]
                # unit normal of the facet's affine hull
                _, _, vh = np.linalg.svd(E)
                n = vh[-1]
            b = float(n @ others[0])
            if float(n @ V[i]) > b:
                n, b = -n, -b
            rows.append(n)
            offs.append(b)
        return np.array(rows), np.array(offs)

    def contains_batch(self, pts):
        lam = (np.asarray(pts, dtype=float) - self.vertices[0]) @ self._edge_inv.T
        tol = 1e-12
        return np.all(lam >= -tol, axis=1) & (np.sum(lam, axis=1) <= 1.0 + tol)

    def volume(self):
        return self._volume

    def bounding_ball(self):
        c = self.vertices.mean(axis=0)
        return c, float(np.max(np.linalg.norm(self.vertices - c, axis=1)))

    def halfspaces(self):
        return self._hrep

    def describe(self):
        return f"simplex:d={self.d}"


class HPolytope(ConvexBody):
    """{x : Ax <= b}; boundedness and non-empty interior certified on build."""

    MAX_ROWS = 64

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[0],):
            raise DimensionMismatchError("need A (m, d) and b (m,)")
        m, d = A.shape
        if d < 1 or d > MAX_DIMENSION:
            raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
        if m > self.MAX_ROWS:
            raise ValueError(f"at most {self.MAX_ROWS} halfspaces supported")
        self.d = d
        self.A = A
        self.b = b
        lo, hi = np.empty(d), np.empty(d)
        for i in range(d):
            c = np.zeros(d)
            c[i] = 1.0
            status, _, val = solve_lp(c, A, b)
            if status == "infeasible":
                raise ValueError("polytope is empty")
            if status == "unbounded":
                raise UnboundedPolytopeError(f"unbounded in -e_{i}")
            lo[i] = val
            status, _, val = solve_lp(-c, A, b)
            if status == "unbounded":
                raise UnboundedPolytopeError(f"unbounded in +e_{i}")
            hi[i] = -val
        self._box = (lo, hi)
        # Chebyshev radius certifies a non-empty interior
        norms = np.linalg.norm(A, axis=1)
        ext = np.hstack([A, norms[:, None]])
        c = np.zeros(d + 1)
        c[-1] = -1.0
        status, sol, _ = solve_lp(c, ext, b)
        if status != "optimal" or sol[-1] <= DEDUP_TOL:
            raise ValueError("polytope has empty interior")
        self._volume: float | None = None

    def contains_batch(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all(pts @ self.A.T <= self.b[None, :], axis=1)

    def volume(self):
        if self._volume is None:
            if self.d > 4:
                raise UnsupportedExactVolumeError(
                    "exact H-polytope volume is implemented for d <= 4"
                )
            verts = vertex_enumeration(self.A, self.b, check_bounded=False)
            self._volume = _polytope_volume(self.A, self.b, verts, self.d)
        return self._volume

    def bounding_ball(self):
        lo, hi = self._box
        return 0.5 * (lo + hi), float(np.linalg.norm(0.5 * (hi - lo)))

    def halfspaces(self):
        return self.A, self.b

    def describe(self):
        return f"polytope:m={self.A.shape[0]},d={self.d}"


def load_hpolytope(path) -> HPolytope:
    """Load {"A": [[...]], "b": [...]} (rows are halfspaces Ax <= b)."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "A" not in doc or "b" not in doc:
        raise ValueError(f"{path}: expected a JSON object with keys 'A' and 'b'")
    return HPolytope(doc["A"], doc["b"])


class LinearSubspace:
    """A k-dimensional linear subspace given by an orthonormal d x k basis."""

    def __init__(self, basis):
        U = np.asarray(basis, dtype=float)
        if U.ndim != 2 or U.shape[0] < U.shape[1] or U.shape[1] < 1:
            raise DimensionMismatchError("basis must be d x k with k <= d")
        gram_err = np.max(np.abs(U.T @ U - np.eye(U.shape[1])))
        if gram_err > _ORTHO_TOL:
            raise ValueError(f"basis not orthonormal (error {gram_err:.2e})")
        self.basis = U

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


class AffineFlat:
    """A k-flat {U t + y : t in R^k} with orthonormal U and offset y ⟂ U."""

    def __init__(self, basis, offset):
        U = np.asarray(basis, dtype=float)
        y = np.asarray(offset, dtype=float)
        if U.ndim != 2 or U.shape[0] < U.shape[1] or U.shape[1] < 1:
            raise DimensionMismatchError("basis must be d x k with k <= d")
        if y.shape != (U.shape[0],):
            raise DimensionMismatchError("offset must be a d-vector")
        gram_err = np.max(np.abs(U.T @ U - np.eye(U.shape[1])))
        if gram_err > _ORTHO_TOL:
            raise ValueError(f"basis not orthonormal (error {gram_err:.2e})")
        if np.linalg.norm(U.T @ y) > _ORTHO_TOL:
            raise ValueError("offset must be orthogonal to the basis")
        self.basis = U
        self.offset = y

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]


def contains(body: ConvexBody, x) -> bool:
    """Closed membership test; boundary points count as inside."""
    return body.contains(x)


def exact_volume(body: ConvexBody) -> float:
    return body.volume()


def gram_volume_origin(points) -> float:
    """|conv(0, x_1, ..., x_k)| = sqrt(det X X')/k! for points as rows of X.

    Rank-deficient tuples give 0 (negative determinants from round-off are
    clamped).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k, d = pts.shape
    if not 1 <= k <= d:
        raise DimensionMismatchError(f"need 1 <= k <= d, got k={k}, d={d}")
    return float(kernels.gram_volume_batch(pts[None])[0])


def gram_volume_affine(points) -> float:
    """|conv(x_0, ..., x_k)|, computed from the edge vectors x_i - x_0."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 1:
        return 1.0  # 0-dimensional volume of a point
    diffs = pts[1:] - pts[0]
    k, d = diffs.shape
    if k > d:
        raise DimensionMismatchError(f"need at most d+1 points in R^{d}")
    return float(kernels.gram_volume_batch(diffs[None])[0])


def vertex_enumeration(A, b, check_bounded: bool = True) -> np.ndarray:
    """All vertices of {x : Ax <= b}, deduplicated at 1e-9 in the max norm.

    Every k-subset of rows is solved and solutions violating any constraint
    by more than 1e-9 (after row normalization) are discarded.  Desk scale:
    at most 64 rows and k <= 4.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = A.shape
    if m > 64 or k > 4:
        raise ValueError("vertex enumeration supports m <= 64, k <= 4")
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 1e-12
    if np.any(~keep & (b < -DEDUP_TOL)):
        return np.empty((0, k))
    An = A[keep] / norms[keep, None]
    bn = b[keep] / norms[keep]
    m = An.shape[0]
    if m < k:
        if check_bounded:
            raise UnboundedPolytopeError("fewer active rows than dimensions")
        return np.empty((0, k))
    if check_bounded:
        for i in range(k):
            c = np.zeros(k)
            c[i] = 1.0
            for sign in (c, -c):
                status, _, _ = solve_lp(sign, An, bn)
                if status == "unbounded":
                    raise UnboundedPolytopeError("polytope is unbounded")

    subsets = list(itertools.combinations(range(m), k))
    mats = An[np.array(subsets)]
    rhss = bn[np.array(subsets)]
    dets = np.abs(np.linalg.det(mats))
    good = dets > 1e-12
    verts: list[np.ndarray] = []
    if np.any(good):
        sols = np.linalg.solve(mats[good], rhss[good][:, :, None])[:, :, 0]
        feas = np.all(sols @ An.T <= bn[None, :] + DEDUP_TOL, axis=1)
        for v in sols[feas]:
            if not any(np.max(np.abs(v - w)) <= DEDUP_TOL for w in verts):
                verts.append(v)
    return np.array(verts) if verts else np.empty((0, k))


def _polygon_area(verts: np.ndarray) -> float:
    """Area of the convex hull of coplanar 2-d points via angular sort."""
    if verts.shape[0] < 3:
        return 0.0
    c = verts.mean(axis=0)
    order = np.argsort(np.arctan2(verts[:, 1] - c[1], verts[:, 0] - c[0]))
    v = verts[order]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def _polytope_volume(A, b, verts: np.ndarray, dim: int) -> float:
    """Volume of {Ax <= b} = conv(verts) by recursive facet decomposition.

    Each facet contributes a pyramid (facet volume x height / dim) over an
    interior point; facet volumes recurse down to polygon/interval bases.
    Supports dim <= 4 (desk scale).
    """
    if verts.shape[0] < dim + 1:
        return 0.0
    if dim == 1:
        return float(verts.max() - verts.min())
    if dim == 2:
        return _polygon_area(verts)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 1e-12
    An, bn = A[keep] / norms[keep, None], b[keep] / norms[keep]
    seen: set[bytes] = set()
    x0 = verts.mean(axis=0)
    total = 0.0
    for a_row, b_off in zip(An, bn):
        key = np.round(np.concatenate([a_row, [b_off]]), 9).tobytes()
        if key in seen:
            continue
        seen.add(key)
        tight = verts[np.abs(verts @ a_row - b_off) <= 1e-8]
        if tight.shape[0] < dim:
            continue
        h = b_off - float(a_row @ x0)
        if h <= 0:
            continue
        _, _, vh = np.linalg.svd(a_row[None, :])
        Q = vh[1:].T  # dim x (dim-1) basis of the facet's direction space
        x_ref = b_off * a_row
        t = (tight - x_ref) @ Q
        sub_A = An @ Q
        sub_b = bn - An @ x_ref
        total += _polytope_volume(sub_A, sub_b, t, dim - 1) * h / dim
    return total


def _section_hrep(body: ConvexBody, U: np.ndarray, y: np.ndarray):
    """Restrict Ax <= b to the flat x = U t + y; rows are renormalized.

    Returns (A', b') or None when a constraint that does not involve t is
    violated (empty section).
    """
    A, b = body.halfspaces()
    A2 = A @ U
    b2 = b - A @ y
    norms = np.linalg.norm(A2, axis=1) if U.shape[1] > 1 else np.abs(A2[:, 0])
    degen = norms <= 1e-12
    if np.any(b2[degen] < -DEDUP_TOL):
        return None
    A2, b2, norms = A2[~degen], b2[~degen], norms[~degen]
    return A2 / norms[:, None], b2 / norms


def _section_volume(body: ConvexBody, U: np.ndarray, y: np.ndarray) -> float:
    d, k = U.shape
    if d != body.d:
        raise DimensionMismatchError("subspace dimension does not match body")
    if k == d:
        return body.volume()
    M = body.shape_matrix()
    if M is not None:
        center = body.center  # Ball and Ellipsoid both carry one
        return float(
            kernels.quadric_section_batch(U[None], (center - y)[None], M, kappa(k))[0]
        )
    if k > 3:
        raise UnsupportedExactSectionError(
            "exact polytope sections are implemented for k <= 3"
        )
    hrep = _section_hrep(body, U, y)
    if hrep is None:
        return 0.0
    A2, b2 = hrep
    if k == 1:
        length, _ = kernels.interval_section_batch(A2[:, 0][None, :], b2[None, :])
        return float(length[0])
    verts = vertex_enumeration(A2, b2, check_bounded=False)
    if k == 2:
        return _polygon_area(verts)
    return _polytope_volume(A2, b2, verts, k)


def section_volume_linear(body: ConvexBody, subspace: LinearSubspace) -> float:
    """k-volume of the body's intersection with a linear subspace."""
    return _section_volume(body, subspace.basis, np.zeros(body.d))


def section_volume_affine(body: ConvexBody, flat: AffineFlat) -> float:
    """k-volume of the body's intersection with an affine flat (0 on miss)."""
    return _section_volume(body, flat.basis, flat.offset)


def projection_membership(body: ConvexBody, W, y) -> bool:
    """True iff some x in the body has W'x = y (W: orthonormal d x (d-k)).

    Equivalently: the flat {x : W'x = y} parallel to the orthogonal
    complement of span(W) meets the body.  Quadrics use the projected
    ellipsoid in closed form; polytopal bodies solve the feasibility LP
    {Ax <= b, W'x = y} with the two-phase simplex.
    """
    W = np.asarray(W, dtype=float)
    y = np.asarray(y, dtype=float)
    if W.ndim != 2 or W.shape[0] != body.d or y.shape != (W.shape[1],):
        raise DimensionMismatchError("W must be d x m with y an m-vector")
    if np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) > 1e-8:
        raise ValueError("W must have orthonormal columns")
    M = body.shape_matrix()
    if M is not None:
        Minv = np.linalg.inv(M)
        S = W.T @ Minv @ W
        z = y - W.T @ body.center
        return float(z @ np.linalg.solve(S, z)) <= 1.0
    A, b = body.halfspaces()
    return lp_feasible(A_ub=A, b_ub=b, A_eq=W.T, b_eq=y)
