import math

import mpmath as mp
import numpy as np
import pytest

from convexmc.mathkernel import (
    MomentParams,
    affine_identity_constants,
    b_coeff,
    gen_binomial,
    kappa,
    linear_identity_constant,
    log_gamma,
    log_kappa,
    prob_constants,
    thm1_constant,
    thm2_constant,
)

mp.mp.dps = 40


def mp_kappa(p):
    return mp.pi ** (mp.mpf(p) / 2) / mp.gamma(mp.mpf(p) / 2 + 1)


def test_log_gamma_values():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-14)
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-14)


def test_log_gamma_accuracy_grid():
    xs = np.concatenate([np.linspace(0.01, 5, 41), np.linspace(5, 300, 60)])
    for x in xs:
        ref = float(mp.loggamma(mp.mpf(float(x))))
        got = log_gamma(float(x))
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-13)


def test_log_gamma_domain():
    with pytest.raises(ValueError):
        log_gamma(0.0)
    with pytest.raises(ValueError):
        log_gamma(-1.5)


def test_kappa_values():
    assert kappa(0) == 1.0
    assert kappa(2) == pytest.approx(math.pi, rel=1e-14)
    assert kappa(3) == pytest.approx(4 * math.pi / 3, rel=1e-14)
    assert kappa(2.5) == pytest.approx(3.6915286568649613670, rel=1e-13)
    with pytest.raises(ValueError):
        kappa(-0.1)


def test_kappa_recursion():
    # kappa_d = 2 pi kappa_{d-2} / d
    for d in range(2, 25):
        assert kappa(d) == pytest.approx(2 * math.pi * kappa(d - 2) / d, rel=1e-12)


def test_kappa_log_concave_and_decreasing():
    # ln kappa has second derivative -psi'(p/2+1)/4 < 0: log-concave, with a
    # single maximum near p = 5.26 after which kappa decreases
    ps = np.linspace(0.5, 30, 60)
    lk = np.array([log_kappa(p) for p in ps])
    second = lk[2:] - 2 * lk[1:-1] + lk[:-2]
    assert np.all(second < 0)
    vals = [kappa(p) for p in range(6, 31)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_gen_binomial():
    assert gen_binomial(5, 2) == pytest.approx(10.0, rel=1e-15)
    assert gen_binomial(2.5, 2) == pytest.approx(1.875, rel=1e-15)
    for q in (-3.2, 0.0, 1.5, 7.0):
        assert gen_binomial(q, 0) == 1.0


def test_b_coeff():
    for q in (0.5, 1.0, 3.7):
        assert b_coeff(q, 0) == 1.0
    for d in range(1, 9):
        assert b_coeff(d, d) == pytest.approx(1.0, rel=1e-12)
    assert b_coeff(2, 1) == pytest.approx(math.pi, rel=1e-13)
    with pytest.raises(ValueError):
        b_coeff(1.5, 2)


def test_moment_params_validation():
    with pytest.raises(ValueError):
        MomentParams(3, 0, 0.0)  # k = 0 rejected at configuration time
    with pytest.raises(ValueError):
        MomentParams(3, 4, 0.0)
    with pytest.raises(ValueError):
        MomentParams(13, 2, 0.0)
    with pytest.raises(ValueError):
        MomentParams(3, 2, -0.5)  # p >= -d+k+1 = 0
    MomentParams(3, 2, 0.0)
    MomentParams(4, 1, -2.0)


def test_thm1_constant_examples():
    assert thm1_constant(MomentParams(3, 2, 0)) == pytest.approx(
        9 * math.pi / 16, rel=1e-12
    )
    assert thm1_constant(MomentParams(2, 1, 1)) == pytest.approx(
        12 / math.pi, rel=1e-12
    )


def test_thm2_constant_examples():
    assert thm2_constant(MomentParams(2, 1, 0)) == pytest.approx(
        3 / math.pi, rel=1e-12
    )
    ref = float(mp_kappa(2) ** 4 * mp_kappa(9) / (mp_kappa(3) ** 3 * mp_kappa(8)))
    assert thm2_constant(MomentParams(3, 2, 0)) == pytest.approx(ref, rel=1e-12)


def test_reduction_identity_a():
    # thm1 at p=0 equals the section-volume constant kappa_k^d / kappa_d^k
    for d in range(1, 11):
        for k in range(1, d + 1):
            ref = math.exp(d * log_kappa(k) - k * log_kappa(d))
            assert thm1_constant(MomentParams(d, k, 0)) == pytest.approx(
                ref, rel=1e-10
            )


def test_reduction_identity_b():
    # thm1 at k=1 equals (d+p) 2^{d+p} / (d kappa_d)
    for d in range(1, 11):
        for p in (-d + 2, 0.0, 0.5, 1.0, 2.0, 3.0):
            if p < -d + 2:
                continue
            ref = (d + p) * 2 ** (d + p) / (d * kappa(d))
            assert thm1_constant(MomentParams(d, 1, float(p))) == pytest.approx(
                ref, rel=1e-10
            )
            assert linear_identity_constant(d, float(p)) == pytest.approx(
                ref, rel=1e-12
            )


def test_reduction_identity_c():
    # thm1 at k=d equals the d-point simplex constant
    for d in range(1, 11):
        for p in (1.0, 1.5, 2.0, 3.0):
            ref = math.exp(
                p * math.lgamma(d + 1)
                + (p + d) * log_kappa(d)
                - d * log_kappa(d + p)
                + math.log(b_coeff(d + p, d))
            )
            assert thm1_constant(MomentParams(d, d, p)) == pytest.approx(
                ref, rel=1e-10
            )


def test_reduction_identity_d():
    # thm2 at p=0: affine section constant; thm2 at k=d: (d+1)-point constant
    for d in range(1, 11):
        for k in range(1, d + 1):
            ref = math.exp(
                (d + 1) * log_kappa(k)
                - (k + 1) * log_kappa(d)
                + log_kappa(d * (k + 1))
                - log_kappa(k * (d + 1))
            )
            assert thm2_constant(MomentParams(d, k, 0)) == pytest.approx(
                ref, rel=1e-10
            )
    for d in range(1, 11):
        for p in (1.0, 2.0, 2.5):
            ref = math.exp(
                p * math.lgamma(d + 1)
                + math.log(b_coeff(d + p, d))
                + (p + d + 1) * log_kappa(d)
                - (d + 1) * log_kappa(d + p)
                + log_kappa((d + 1) * (d + p))
                - log_kappa(d * (d + p + 1))
            )
            assert thm2_constant(MomentParams(d, d, p)) == pytest.approx(
                ref, rel=1e-10
            )


def test_duplication_identity():
    # 2^{q+1} kappa_{2q} = (q+1) kappa_q kappa_{q+1}
    for q in np.arange(0.5, 20.5, 0.5):
        lhs = 2 ** (q + 1) * kappa(2 * q)
        rhs = (q + 1) * kappa(q) * kappa(q + 1)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_prob_constants():
    # linear probabilistic constant is thm1_constant on a d <= 6 grid
    for d in range(2, 7):
        for k in range(1, d):
            for p in (0.0, 1.0, 2.0):
                params = MomentParams(d, k, p)
                lin, aff = prob_constants(params)
                assert lin == thm1_constant(params)
                ratio = math.comb(d, k) * kappa(d) / (kappa(k) * kappa(d - k))
                assert aff / thm2_constant(params) == pytest.approx(ratio, rel=1e-10)
    assert prob_constants(MomentParams(2, 1, 0))[1] == pytest.approx(1.5, rel=1e-12)
    with pytest.raises(ValueError):
        prob_constants(MomentParams(3, 3, 1.0))


def test_identity_constants():
    assert linear_identity_constant(2, 0) == pytest.approx(4 / math.pi, rel=1e-12)
    printed, doubled = affine_identity_constants(2, 0)
    assert printed == pytest.approx(3 / (2 * math.pi), rel=1e-12)
    assert doubled == pytest.approx(3 / math.pi, rel=1e-12)
    # the doubled candidate coincides with the affine comparison constant at k=1
    for d in range(2, 8):
        for p in (0.0, 1.0, 2.5):
            _, doubled = affine_identity_constants(d, p)
            assert doubled == pytest.approx(
                thm2_constant(MomentParams(d, 1, p)), rel=1e-10
            )
    with pytest.raises(ValueError):
        linear_identity_constant(3, -1.5)
