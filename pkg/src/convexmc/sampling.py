"""Deterministic seeded sampling of points, subspaces, and affine flats.

Stream derivation recipe (stable across runs, platforms, and worker
counts; the compiled and pure-Python backends share it):

    mix(z)            = splitmix64 finalizer (xor-shift/multiply rounds)
    key(seed, i)      = mix(mix(seed + GOLDEN * (i + 1)))      GOLDEN = 0x9E3779B97F4A7C15
    raw(key, ctr, j)  = mix(key + GOLDEN * (ctr + j + 1))
    uniform           = (raw >> 11) * 2^-53
    normals           = Box-Muller on uniform pairs (2 raws per 2 normals)

Every sampler consumes a documented number of raw draws per sample, so a
sample is a pure function of (seed, stream index) and estimators may shard
the index range across workers arbitrarily.

Distribution contracts: points are exactly uniform in balls (radial
inversion), ellipsoids (affine image of the ball sampler), boxes
(componentwise) and simplices (exponential spacings); H-polytopes use
rejection from the bounding box.  Subspaces are Haar: a d x k Gaussian
matrix is orthonormalized by modified Gram-Schmidt.  Affine k-flats are
proposed as L + y with L Haar and y uniform in the (d-k)-ball of radius R
around the projection of the body's bounding-ball center; the constant
weight kappa_{d-k} R^{d-k} makes  E[weight * hit * f(E)]  equal the
rigid-motion-invariant flat measure of f restricted to flats meeting the
body, normalized so flats meeting the unit ball have measure kappa_{d-k}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .bodies import (
    AffineFlat,
    Ball,
    Box,
    ConvexBody,
    Ellipsoid,
    HPolytope,
    LinearSubspace,
    Simplex,
    projection_membership,
)
from .mathkernel import kappa

_MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

MAX_REJECTION_PROPOSALS = 100_000


class RejectionStallError(RuntimeError):
    """Rejection sampling acceptance fell below 1e-4 over 1e5 proposals."""


def mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


def fold_seed(seed: int, salt: int | str) -> int:
    """Derive an independent seed from (seed, salt); salt may be a label."""
    s = _fnv1a64(salt.encode()) if isinstance(salt, str) else salt & _MASK
    return mix64((seed & _MASK) ^ mix64(s))


def stream_key(seed: int, index: int) -> int:
    return mix64(mix64((seed + GOLDEN * (index + 1)) & _MASK))


@dataclass
class RandomStream:
    """One deterministic substream: (seed, index) fixes the whole sequence."""

    seed: int
    index: int
    counter: int = 0
    _keys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._keys = kernels.stream_keys(self.seed, self.index, 1)

    def _ctrs(self) -> np.ndarray:
        return np.array([self.counter], dtype=np.uint64)

    def uniforms(self, m: int) -> np.ndarray:
        out = kernels.uniform_block(self._keys, self._ctrs(), m)[0]
        self.counter += m
        return out

    def normals(self, m: int) -> np.ndarray:
        out = kernels.normal_block(self._keys, self._ctrs(), m)[0]
        self.counter += kernels.normals_consumed(m)
        return out


def derive_substream(seed: int, index: int) -> RandomStream:
    """Counter-based substream; independent of call order and placement."""
    return RandomStream(seed=seed, index=index)


@dataclass
class WeightedFlat:
    """An affine-flat proposal with its measure weight and hit indicator."""

    flat: AffineFlat
    weight: float
    hit: bool


# ---------------------------------------------------------------------------
# batch samplers (keys/ctrs arrays); the scalar spec operations below are
# single-row calls of these, so scalar and batch output are bit-identical


def _ball_points(keys, ctrs, npts, d):
    n = keys.shape[0]
    pts = np.empty((n, npts, d))
    nc = kernels.normals_consumed(d)
    for j in range(npts):
        z = kernels.normal_block(keys, ctrs, d)
        ctrs += np.uint64(nc)
        u = kernels.uniform_block(keys, ctrs, 1)[:, 0]
        ctrs += np.uint64(1)
        nrm = np.sqrt(np.einsum("nd,nd->n", z, z))
        nrm = np.where(nrm > 0, nrm, 1.0)
        pts[:, j, :] = z * (u ** (1.0 / d) / nrm)[:, None]
    return pts


def sample_points_batch(body: ConvexBody, keys, ctrs, npts: int) -> np.ndarray:
    """(n, npts, d) points uniform in the body, one tuple per stream key.

    ctrs is advanced in place.  Raises RejectionStallError when H-polytope
    rejection exceeds the proposal budget.
    """
    n, d = keys.shape[0], body.d
    if isinstance(body, Ball):
        return body.center + body.radius * _ball_points(keys, ctrs, npts, d)
    if isinstance(body, Ellipsoid):
        z = _ball_points(keys, ctrs, npts, d)
        return body.center + np.einsum("ab,njb->nja", body.ball_transform, z)
    if isinstance(body, Box):
        width = body.upper - body.lower
        pts = np.empty((n, npts, d))
        for j in range(npts):
            u = kernels.uniform_block(keys, ctrs, d)
            ctrs += np.uint64(d)
            pts[:, j, :] = body.lower + u * width
        return pts
    if isinstance(body, Simplex):
        pts = np.empty((n, npts, d))
        for j in range(npts):
            u = kernels.uniform_block(keys, ctrs, d + 1)
            ctrs += np.uint64(d + 1)
            e = -np.log1p(-u)
            w = e / np.sum(e, axis=1, keepdims=True)
            pts[:, j, :] = w @ body.vertices
        return pts
    if isinstance(body, HPolytope):
        lo, hi = body._box
        width = hi - lo
        pts = np.empty((n, npts, d))
        for j in range(npts):
            remaining = np.arange(n)
            attempts = 0
            while remaining.size:
                u = kernels.uniform_block(keys[remaining], ctrs[remaining], d)
                ctrs[remaining] += np.uint64(d)
                cand = lo + u * width
                acc = body.contains_batch(cand)
                pts[remaining[acc], j, :] = cand[acc]
                remaining = remaining[~acc]
                attempts += 1
                if attempts > MAX_REJECTION_PROPOSALS:
                    raise RejectionStallError(
                        "H-polytope rejection acceptance below 1e-4 "
                        f"after {attempts} proposals per point"
                    )
        return pts
    raise TypeError(f"unsupported body type {type(body).__name__}")


def sample_grassmannian_batch(d: int, k: int, keys, ctrs) -> np.ndarray:
    """(n, d, k) stack of Haar orthonormal frames; ctrs advanced in place."""
    n = keys.shape[0]
    m = d * k
    nc = kernels.normals_consumed(m)
    U = np.empty((n, d, k))
    active = np.arange(n)
    while active.size:
        g = kernels.normal_block(keys[active], ctrs[active], m).reshape(-1, d, k)
        ctrs[active] += np.uint64(nc)
        Q, ok = kernels.orthonormalize_batch(g)
        U[active[ok]] = Q[ok]
        active = active[~ok]  # rank deficiency has probability 0; just retry
    return U


def flat_weight(body: ConvexBody, k: int) -> float:
    """The constant proposal weight kappa_{d-k} R^{d-k} for the body."""
    _, radius = body.bounding_ball()
    return kappa(body.d - k) * radius ** (body.d - k)


def sample_flats_batch(body: ConvexBody, k: int, keys, ctrs):
    """Affine-flat proposals: (U, y) with y the offset vector in span(U)^perp.

    The hit indicator is left to the caller (the exact section machinery or
    projection_membership decide it); the weight is flat_weight(body, k).
    """
    d = body.d
    if not 1 <= k <= d - 1:
        raise ValueError(f"affine flats need 1 <= k <= d-1, got k={k}, d={d}")
    center, radius = body.bounding_ball()
    U = sample_grassmannian_batch(d, k, keys, ctrs)
    n = keys.shape[0]
    nc = kernels.normals_consumed(d)
    dirs = np.empty((n, d))
    active = np.arange(n)
    while active.size:
        g = kernels.normal_block(keys[active], ctrs[active], d)
        ctrs[active] += np.uint64(nc)
        Ua = U[active]
        w = g - np.einsum("ndk,nk->nd", Ua, np.einsum("ndk,nd->nk", Ua, g))
        nrm = np.sqrt(np.einsum("nd,nd->n", w, w))
        ok = nrm > 1e-8
        dirs[active[ok]] = w[ok] / nrm[ok, None]
        active = active[~ok]
    u = kernels.uniform_block(keys, ctrs, 1)[:, 0]
    ctrs += np.uint64(1)
    r = radius * u ** (1.0 / (d - k))
    c_perp = center[None, :] - np.einsum(
        "ndk,nk->nd", U, np.einsum("ndk,d->nk", U, center)
    )
    y = c_perp + dirs * r[:, None]
    y -= np.einsum("ndk,nk->nd", U, np.einsum("ndk,nd->nk", U, y))
    return U, y


# ---------------------------------------------------------------------------
# scalar spec operations


def sample_uniform_in_body(body: ConvexBody, stream: RandomStream) -> np.ndarray:
    """One point uniform in the body, consuming the stream."""
    ctrs = stream._ctrs()
    pts = sample_points_batch(body, stream._keys, ctrs, 1)
    stream.counter = int(ctrs[0])
    return pts[0, 0]


def sample_grassmannian(d: int, k: int, stream: RandomStream) -> LinearSubspace:
    """A Haar-distributed k-dimensional linear subspace of R^d."""
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    ctrs = stream._ctrs()
    U = sample_grassmannian_batch(d, k, stream._keys, ctrs)
    stream.counter = int(ctrs[0])
    return LinearSubspace(U[0])


def complement_basis(U: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(U)^perp (d x (d-k))."""
    _, _, vh = np.linalg.svd(U.T, full_matrices=True)
    return vh[U.shape[1] :].T


def sample_affine_flat(body: ConvexBody, k: int, stream: RandomStream) -> WeightedFlat:
    """One weighted affine-flat proposal; hit is an exact membership test."""
    ctrs = stream._ctrs()
    U, y = sample_flats_batch(body, k, stream._keys, ctrs)
    stream.counter = int(ctrs[0])
    flat = AffineFlat(U[0], y[0])
    W = complement_basis(U[0])
    hit = projection_membership(body, W, W.T @ y[0])
    return WeightedFlat(flat=flat, weight=flat_weight(body, k), hit=hit)
