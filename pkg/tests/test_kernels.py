"""Kernel backend tests: RNG quality, batch-operation correctness, and
parity between the compiled backend and the pure-NumPy fallback."""

import math

import numpy as np
import pytest
from scipy import stats

import convexmc._kernels as kernels
from convexmc._kernels import pykernels

try:
    from convexmc._kernels import cykernels
except ImportError:
    cykernels = None

BACKENDS = [pykernels] + ([cykernels] if cykernels is not None else [])


def test_active_backend_name():
    assert kernels.active_backend() in ("python", "cython")


@pytest.mark.parametrize("impl", BACKENDS)
def test_uniform_quality(impl):
    keys = impl.stream_keys(99, 0, 200)
    ctrs = np.zeros(200, dtype=np.uint64)
    u = impl.uniform_block(keys, ctrs, 500).ravel()
    assert np.all((u >= 0) & (u < 1))
    assert stats.kstest(u, "uniform").pvalue > 0.01


@pytest.mark.parametrize("impl", BACKENDS)
def test_normal_quality(impl):
    keys = impl.stream_keys(7, 0, 100)
    ctrs = np.zeros(100, dtype=np.uint64)
    z = impl.normal_block(keys, ctrs, 1001).ravel()
    assert abs(np.mean(z)) < 4 / math.sqrt(z.size)
    assert abs(np.std(z) - 1.0) < 4 / math.sqrt(z.size)
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_stream_key_pairwise_decorrelated():
    keys = pykernels.stream_keys(1, 0, 64)
    ctrs = np.zeros(64, dtype=np.uint64)
    u = pykernels.uniform_block(keys, ctrs, 1000)
    corr = np.corrcoef(u)
    off = corr[~np.eye(64, dtype=bool)]
    assert np.max(np.abs(off)) < 0.15  # 4/sqrt(1000) with margin


def test_counter_continuation():
    # drawing m then m more equals drawing 2m at once
    keys = pykernels.stream_keys(5, 0, 3)
    a = pykernels.uniform_block(keys, np.zeros(3, dtype=np.uint64), 4)
    b = pykernels.uniform_block(keys, np.full(3, 4, dtype=np.uint64), 4)
    both = pykernels.uniform_block(keys, np.zeros(3, dtype=np.uint64), 8)
    assert np.array_equal(np.hstack([a, b]), both)


@pytest.mark.parametrize("impl", BACKENDS)
def test_orthonormalize(impl, rng):
    mats = rng.normal(size=(200, 6, 3))
    Q, ok = impl.orthonormalize_batch(mats)
    assert ok.all()
    gram = np.einsum("ndk,ndl->nkl", Q, Q)
    assert np.max(np.abs(gram - np.eye(3))) < 1e-10
    # rank-deficient input is flagged
    bad = np.ones((1, 4, 2))
    _, ok = impl.orthonormalize_batch(bad)
    assert not ok[0]


@pytest.mark.parametrize("impl", BACKENDS)
def test_gram_volume(impl, rng):
    pts = np.array([[[1.0, 0, 0], [0, 1.0, 0]]])
    assert impl.gram_volume_batch(pts)[0] == pytest.approx(0.5, rel=1e-14)
    pts = rng.normal(size=(50, 3, 5))
    ref = np.sqrt(np.maximum(np.linalg.det(pts @ pts.transpose(0, 2, 1)), 0)) / 6
    assert np.allclose(impl.gram_volume_batch(pts), ref, rtol=1e-9)
    degen = np.array([[[1.0, 2.0], [2.0, 4.0]]])
    assert impl.gram_volume_batch(degen)[0] == 0.0


@pytest.mark.parametrize("impl", BACKENDS)
def test_quadric_section(impl, rng):
    # unit ball: any central section is a unit k-ball
    U, _ = impl.orthonormalize_batch(rng.normal(size=(20, 4, 2)))
    e = np.zeros((20, 4))
    vol = impl.quadric_section_batch(U, e, np.eye(4), math.pi)
    assert np.allclose(vol, math.pi, rtol=1e-12)
    # offset flats: disk of radius sqrt(1-h^2)
    U = np.eye(3)[None, :, :2]
    h = 0.6
    e = np.array([[0.0, 0.0, -h]])  # e = c - y with y = (0,0,h)
    vol = impl.quadric_section_batch(U, e, np.eye(3), math.pi)
    assert vol[0] == pytest.approx(math.pi * (1 - h * h), rel=1e-12)
    # miss
    e = np.array([[0.0, 0.0, -2.0]])
    assert impl.quadric_section_batch(U, e, np.eye(3), math.pi)[0] == 0.0


@pytest.mark.parametrize("impl", BACKENDS)
def test_interval_section(impl):
    a = np.array([[1.0, -1.0], [1.0, -1.0], [1e-15, 1.0]])
    c = np.array([[1.0, 1.0], [1.0, -2.0], [-1.0, 1.0]])
    length, ok = impl.interval_section_batch(a, c)
    assert length[0] == pytest.approx(2.0) and ok[0]
    assert length[1] == 0.0 and not ok[1]  # t <= 1 and t >= 2
    assert length[2] == 0.0 and not ok[2]  # 0 <= -1 infeasible


@pytest.mark.parametrize("impl", BACKENDS)
def test_polygon_section(impl):
    # unit square from halfplanes, bounding disk radius 2
    a = np.array([[[1.0, 0], [-1, 0], [0, 1], [0, -1]]])
    c = np.ones((1, 4))
    area, ok = impl.polygon_section_batch(a, c, np.zeros((1, 2)), np.array([2.0]))
    assert ok[0] and area[0] == pytest.approx(4.0, rel=1e-12)
    # infeasible pair of halfplanes
    a2 = np.array([[[1.0, 0], [-1.0, 0]]])
    c2 = np.array([[-2.0, 1.0]])
    area, ok = impl.polygon_section_batch(a2, c2, np.zeros((1, 2)), np.array([2.0]))
    assert not ok[0] and area[0] == 0.0


@pytest.mark.skipif(cykernels is None, reason="compiled backend not built")
class TestBackendParity:
    def test_integer_paths_bit_identical(self):
        keys_p = pykernels.stream_keys(42, 17, 500)
        keys_c = cykernels.stream_keys(42, 17, 500)
        assert np.array_equal(keys_p, keys_c)
        ctrs = np.arange(500, dtype=np.uint64)
        up = pykernels.uniform_block(keys_p, ctrs, 9)
        uc = cykernels.uniform_block(keys_c, ctrs, 9)
        assert np.array_equal(up, uc)

    def test_float_paths_agree(self, rng):
        keys = pykernels.stream_keys(1, 0, 300)
        ctrs = np.zeros(300, dtype=np.uint64)
        zp = pykernels.normal_block(keys, ctrs, 7)
        zc = cykernels.normal_block(keys, ctrs, 7)
        assert np.allclose(zp, zc, atol=1e-12)

        mats = rng.normal(size=(300, 5, 3))
        qp, okp = pykernels.orthonormalize_batch(mats)
        qc, okc = cykernels.orthonormalize_batch(mats)
        assert np.array_equal(okp, okc) and np.allclose(qp, qc, atol=1e-12)

        pts = rng.normal(size=(300, 3, 5))
        assert np.allclose(
            pykernels.gram_volume_batch(pts),
            cykernels.gram_volume_batch(pts),
            rtol=1e-10,
        )

        M = np.diag([1.0, 0.25, 1.0 / 9.0])
        U, _ = pykernels.orthonormalize_batch(rng.normal(size=(300, 3, 2)))
        e = 0.2 * rng.normal(size=(300, 3))
        sp = pykernels.quadric_section_batch(U, e, M, math.pi)
        sc = cykernels.quadric_section_batch(U, e, M, math.pi)
        assert np.allclose(sp, sc, atol=1e-10)

    def test_sections_agree(self, rng):
        a = rng.normal(size=(200, 6, 2))
        c = rng.uniform(0.2, 1.5, size=(200, 6))
        t0 = 0.1 * rng.normal(size=(200, 2))
        rad = rng.uniform(0.5, 2.0, size=200)
        ap, okp = pykernels.polygon_section_batch(a, c, t0, rad)
        ac, okc = cykernels.polygon_section_batch(a, c, t0, rad)
        assert np.array_equal(okp, okc) and np.allclose(ap, ac, atol=1e-10)

        a1 = rng.normal(size=(200, 6))
        c1 = rng.uniform(0.5, 2.0, size=(200, 6))
        lp, fp = pykernels.interval_section_batch(a1, c1)
        lc, fc = cykernels.interval_section_batch(a1, c1)
        assert np.array_equal(fp, fc) and np.allclose(lp, lc, rtol=1e-12)
