import math

import numpy as np
import pytest

from convexmc.bodies import Ball, Box, ConvexBody, Ellipsoid, HPolytope, Simplex


def random_rotation(rng, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def rotate_body(body: ConvexBody, R: np.ndarray) -> ConvexBody:
    """The image R K of a body under a rotation (boxes become H-polytopes)."""
    if isinstance(body, Ball):
        return Ball(R @ body.center, body.radius)
    if isinstance(body, Ellipsoid):
        return Ellipsoid(R @ body.center, R @ body.M @ R.T)
    if isinstance(body, Simplex):
        return Simplex(body.vertices @ R.T)
    A, b = body.halfspaces()
    return HPolytope(A @ R.T, b)


def random_centered_ellipsoid(rng, d: int) -> Ellipsoid:
    axes = rng.uniform(0.5, 2.0, size=d)
    R = random_rotation(rng, d)
    return Ellipsoid(np.zeros(d), R @ np.diag(1.0 / axes**2) @ R.T)


def random_hpolytope(rng, d: int, m: int | None = None) -> HPolytope:
    """Tangent halfspaces of the unit sphere plus a bounding box."""
    m = m or 3 * d + 2
    dirs = rng.normal(size=(m, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    eye = np.eye(d)
    A = np.vstack([dirs, eye, -eye])
    b = np.concatenate([np.ones(m), 2.0 * np.ones(2 * d)])
    return HPolytope(A, b)


def standard_test_bodies(rng, d: int) -> list[ConvexBody]:
    """Ball, three random centered ellipsoids, box, simplex, H-polytope."""
    return [
        Ball.unit(d),
        random_centered_ellipsoid(rng, d),
        random_centered_ellipsoid(rng, d),
        random_centered_ellipsoid(rng, d),
        Box.centered(1.0, d),
        Simplex.standard(d),
        random_hpolytope(rng, d),
    ]


def mc_section_oracle(body, U, y, n=1_000_000, seed=0):
    """Membership-counting section volume: uniform points in a k-cube
    around the section's bounding disk.  Independent of the exact section
    code (and of the package RNG).  Returns (estimate, standard_error)."""
    rng = np.random.default_rng(seed)
    d, k = U.shape
    center, radius = body.bounding_ball()
    e = center - y
    t0 = U.T @ e
    resid = float(e @ e - t0 @ t0)
    rad = math.sqrt(max(radius**2 - resid, 0.0))
    if rad == 0.0:
        return 0.0, 0.0
    t = t0 + rng.uniform(-rad, rad, size=(n, k))
    frac = float(np.mean(body.contains_batch(t @ U.T + y)))
    box_vol = (2.0 * rad) ** k
    return box_vol * frac, box_vol * math.sqrt(frac * (1 - frac) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
