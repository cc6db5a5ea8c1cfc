"""Pure-NumPy implementations of the hot batch kernels.

This module is the fallback backend (and the reference for the compiled
one in ``cykernels.pyx``).  Every function is pure and vectorized across
the sample axis; nothing here holds state.

Random numbers come from a counter-based generator (SplitMix64 finalizer):
each stream has a 64-bit key derived from ``(seed, stream index)`` and the
j-th raw draw of a stream is ``mix64(key + GOLDEN * (counter + j + 1))``.
This makes every draw a pure function of (seed, index, counter), so results
do not depend on scheduling or on how samples are sharded across workers.
"""

from __future__ import annotations

import math

import numpy as np

U64 = np.uint64
GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX_A = U64(0xBF58476D1CE4E5B9)
_MIX_B = U64(0x94D049BB133111EB)
_INV53 = 2.0**-53
_TWO_PI = 2.0 * math.pi


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> U64(30))) * _MIX_A
    z = (z ^ (z >> U64(27))) * _MIX_B
    return z ^ (z >> U64(31))


def stream_keys(seed: int, start: int, count: int) -> np.ndarray:
    """Keys for streams ``start .. start+count-1`` of the given seed."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    base = U64(seed & 0xFFFFFFFFFFFFFFFF) + GOLDEN * idx
    return _mix64(_mix64(base))


def _raw(keys: np.ndarray, ctrs: np.ndarray, m: int) -> np.ndarray:
    j = np.arange(1, m + 1, dtype=np.uint64)[None, :]
    return _mix64(keys[:, None] + GOLDEN * (ctrs[:, None] + j))


def uniform_block(keys: np.ndarray, ctrs: np.ndarray, m: int) -> np.ndarray:
    """(n, m) uniforms in [0, 1); consumes m raw draws per stream."""
    return (_raw(keys, ctrs, m) >> U64(11)).astype(np.float64) * _INV53


def normal_block(keys: np.ndarray, ctrs: np.ndarray, m: int) -> np.ndarray:
    """(n, m) standard normals via Box-Muller; consumes 2*ceil(m/2) raws."""
    pairs = (m + 1) // 2
    raw = _raw(keys, ctrs, 2 * pairs)
    # u1 is offset by half an ulp so log() never sees 0
    u1 = ((raw[:, 0::2] >> U64(11)).astype(np.float64) + 0.5) * _INV53
    u2 = (raw[:, 1::2] >> U64(11)).astype(np.float64) * _INV53
    r = np.sqrt(-2.0 * np.log(u1))
    th = _TWO_PI * u2
    out = np.empty((keys.shape[0], 2 * pairs))
    out[:, 0::2] = r * np.cos(th)
    out[:, 1::2] = r * np.sin(th)
    return out[:, :m]


def normals_consumed(m: int) -> int:
    """Raw draws consumed by normal_block(m)."""
    return 2 * ((m + 1) // 2)


def orthonormalize_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize the columns of each (d, k) matrix in a (n, d, k) stack.

    Modified Gram-Schmidt with one re-orthogonalization pass.  Returns the
    orthonormalized stack and a boolean flag per matrix (False = rank
    deficient, output columns unusable and caller must redraw).
    """
    Q = np.array(mats, dtype=np.float64, copy=True)
    n, d, k = Q.shape
    ok = np.ones(n, dtype=bool)
    for i in range(k):
        v = Q[:, :, i].copy()
        for _ in range(2):
            for j in range(i):
                proj = np.einsum("nd,nd->n", v, Q[:, :, j])
                v -= proj[:, None] * Q[:, :, j]
        nrm = np.sqrt(np.einsum("nd,nd->n", v, v))
        bad = nrm < 1e-8
        ok &= ~bad
        Q[:, :, i] = v / np.where(bad, 1.0, nrm)[:, None]
    return Q, ok


def _cholesky_batch(G: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """In-place lower Cholesky of a stack of SPD (k, k) matrices.

    Returns (L, diag_products, ok); ok=False marks matrices that are not
    numerically positive definite (callers treat those as degenerate).
    """
    L = np.array(G, dtype=np.float64, copy=True)
    n, k, _ = L.shape
    diag0 = np.ascontiguousarray(L[:, range(k), range(k)])
    ok = np.ones(n, dtype=bool)
    detroot = np.ones(n)
    for i in range(k):
        s = L[:, i, i].copy()
        for t in range(i):
            s -= L[:, i, t] * L[:, i, t]
        # pivots at round-off scale mean rank deficiency, not tiny volume
        bad = s <= 1e-12 * diag0[:, i]
        ok &= ~bad
        dii = np.sqrt(np.where(bad, 1.0, s))
        L[:, i, i] = dii
        detroot *= dii
        for j in range(i + 1, k):
            r = L[:, j, i].copy()
            for t in range(i):
                r -= L[:, j, t] * L[:, i, t]
            L[:, j, i] = r / dii
    return L, detroot, ok


def gram_volume_batch(pts: np.ndarray) -> np.ndarray:
    """Volume of conv(0, x_1..x_k) for each (k, d) tuple in a (n, k, d) stack.

    sqrt(det Gram)/k!; rank-deficient tuples (non-positive pivots) give 0.
    """
    n, k, d = pts.shape
    G = np.einsum("nkd,nld->nkl", pts, pts)
    _, detroot, ok = _cholesky_batch(G)
    return np.where(ok, detroot, 0.0) / math.factorial(k)


def _solve_cholesky(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = rhs for a stack of lower-triangular L, rhs (n, k)."""
    n, k, _ = L.shape
    y = np.zeros_like(rhs)
    for i in range(k):
        acc = rhs[:, i].copy()
        for t in range(i):
            acc -= L[:, i, t] * y[:, t]
        y[:, i] = acc / L[:, i, i]
    x = np.zeros_like(rhs)
    for i in range(k - 1, -1, -1):
        acc = y[:, i].copy()
        for t in range(i + 1, k):
            acc -= L[:, t, i] * x[:, t]
        x[:, i] = acc / L[:, i, i]
    return x


def quadric_section_batch(U: np.ndarray, e: np.ndarray, M: np.ndarray, kappa_k: float) -> np.ndarray:
    """k-volume of {x : (x-c)' M (x-c) <= 1} intersected with flats x = U t + y.

    U is (n, d, k) with orthonormal columns, e = c - y per sample (n, d),
    M the (d, d) SPD shape matrix, kappa_k the unit-ball volume in dim k.
    Returns kappa_k * max(0, 1 - minval)^{k/2} / sqrt(det U'MU) where minval
    is the minimum of the quadric over the flat.  Misses give 0.
    """
    n, d, k = U.shape
    MU = np.einsum("ab,nbk->nak", M, U)
    A = np.einsum("nak,nal->nkl", U, MU)
    Me = np.einsum("ab,nb->na", M, e)
    g = np.einsum("nak,na->nk", U, Me)
    q0 = np.einsum("na,na->n", e, Me)
    L, detroot, ok = _cholesky_batch(A)
    x = _solve_cholesky(L, g)
    minval = q0 - np.einsum("nk,nk->n", g, x)
    s = np.maximum(1.0 - minval, 0.0)
    vol = kappa_k * s ** (0.5 * k) / detroot
    return np.where(ok, vol, 0.0)


def interval_section_batch(a: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lengths of {t in R : a_i t <= c_i for all i} for (n, m) row stacks.

    Returns (length, nonempty).  Rows with |a| below tolerance are pure
    feasibility constraints (c >= -tol required).
    """
    tol = 1e-12
    pos = a > tol
    neg = a < -tol
    degen_bad = (~pos & ~neg) & (c < -1e-9)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = c / a
    ub = np.min(np.where(pos, ratio, np.inf), axis=1)
    lb = np.max(np.where(neg, ratio, -np.inf), axis=1)
    nonempty = (ub >= lb - 1e-9) & ~degen_bad.any(axis=1) & np.isfinite(ub) & np.isfinite(lb)
    length = np.where(nonempty, np.maximum(ub - lb, 0.0), 0.0)
    return length, nonempty


def _clip_polygon(px, py, m, a0, a1, c):
    """Sutherland-Hodgman clip of one convex polygon by a0*x + a1*y <= c."""
    nx, ny = [], []
    for i in range(m):
        x0, y0 = px[i], py[i]
        x1, y1 = px[(i + 1) % m], py[(i + 1) % m]
        s0 = a0 * x0 + a1 * y0 - c
        s1 = a0 * x1 + a1 * y1 - c
        if s0 <= 0.0:
            nx.append(x0)
            ny.append(y0)
        if (s0 < 0.0 < s1) or (s1 < 0.0 < s0):
            t = s0 / (s0 - s1)
            nx.append(x0 + t * (x1 - x0))
            ny.append(y0 + t * (y1 - y0))
    return nx, ny


def polygon_section_batch(
    a: np.ndarray, c: np.ndarray, t0: np.ndarray, rad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Areas of {t in R^2 : a[i] @ t <= c[i]} known to lie in disk(t0, rad).

    a is (n, m, 2), c is (n, m); t0/rad give a bounding disk per sample.
    Returns (area, nonempty).
    """
    n, m, _ = a.shape
    area = np.zeros(n)
    nonempty = np.zeros(n, dtype=bool)
    for s in range(n):
        r = rad[s]
        if not r > 0.0:
            continue
        cx, cy = t0[s, 0], t0[s, 1]
        px = [cx - r, cx + r, cx + r, cx - r]
        py = [cy - r, cy - r, cy + r, cy + r]
        empty = False
        for i in range(m):
            px, py = _clip_polygon(px, py, len(px), a[s, i, 0], a[s, i, 1], c[s, i])
            if not px:
                empty = True
                break
        if empty:
            continue
        nonempty[s] = True
        acc = 0.0
        v = len(px)
        for i in range(v):
            j = (i + 1) % v
            acc += px[i] * py[j] - px[j] * py[i]
        area[s] = 0.5 * abs(acc)
    return area, nonempty
