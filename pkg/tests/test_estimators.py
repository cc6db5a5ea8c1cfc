import math

import numpy as np
import pytest

from conftest import (
    random_centered_ellipsoid,
    random_hpolytope,
    random_rotation,
    rotate_body,
    standard_test_bodies,
)
from convexmc.bodies import (
    Ball,
    Box,
    Ellipsoid,
    Simplex,
    UnsupportedExactSectionError,
)
from convexmc.estimators import (
    AffineIdentityResult,
    MCEstimate,
    Verdict,
    _build_report,
    _sample_in_section,
    bp_check,
    classify,
    crofton_intrinsic,
    estimate_lhs_affine,
    estimate_lhs_linear,
    estimate_rhs_affine,
    estimate_rhs_linear,
    identity_check,
    mc_mean,
    mc_mean_batch,
    mc_mean_pair,
    verify,
    verify_probabilistic,
)
from convexmc.mathkernel import MomentParams, kappa, thm1_constant
from convexmc.sampling import RejectionStallError, fold_seed


class TestEngine:
    def test_constant_statistic(self):
        est = mc_mean(lambda s: 7.0, 100, 1)
        assert est.mean == 7.0 and est.std_error == 0.0
        assert est.minimum == est.maximum == 7.0

    def test_uniform_clt(self):
        est = mc_mean(lambda s: s.uniforms(1)[0], 100_000, 3)
        assert abs(est.mean - 0.5) <= 3 * (1 / math.sqrt(12)) / math.sqrt(100_000)
        assert est.std_error == pytest.approx((1 / math.sqrt(12)) / math.sqrt(100_000), rel=0.05)

    def test_worker_counts_bit_identical(self):
        def batch(seed, start, count):
            import convexmc._kernels as kernels

            keys = kernels.stream_keys(seed, start, count)
            ctrs = np.zeros(count, dtype=np.uint64)
            return kernels.uniform_block(keys, ctrs, 3).sum(axis=1)

        results = [mc_mean_batch(batch, 20_000, 11, workers=w) for w in (1, 2, 8)]
        for other in results[1:]:
            assert other.mean == results[0].mean
            assert other.std_error == results[0].std_error
            assert other.minimum == results[0].minimum
            assert other.maximum == results[0].maximum

    def test_closure_matches_batch(self):
        def stat(stream):
            return stream.uniforms(2).sum()

        def batch(seed, start, count):
            import convexmc._kernels as kernels

            keys = kernels.stream_keys(seed, start, count)
            ctrs = np.zeros(count, dtype=np.uint64)
            return kernels.uniform_block(keys, ctrs, 2).sum(axis=1)

        a = mc_mean(stat, 5000, 21)
        b = mc_mean_batch(batch, 5000, 21)
        assert a.mean == b.mean and a.std_error == b.std_error

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            mc_mean(lambda s: 1.0, 1, 0)

    def test_tail_share(self):
        def batch(seed, start, count):
            vals = np.ones(count)
            vals[(start + np.arange(count)) < 5] = 1000.0
            return vals

        est = mc_mean_batch(batch, 10_000, 0)
        expected = (5 * 1000.0 + 5) / (5 * 1000.0 + 9995)
        assert est.tail_share == pytest.approx(expected, rel=1e-12)
        assert est.maximum == 1000.0 and est.minimum == 1.0

    def test_pair_covariance(self):
        def batch(seed, start, count):
            import convexmc._kernels as kernels

            keys = kernels.stream_keys(seed, start, count)
            ctrs = np.zeros(count, dtype=np.uint64)
            u = kernels.uniform_block(keys, ctrs, 1)[:, 0]
            return u, 2.0 * u + 1.0

        pair = mc_mean_pair(batch, 50_000, 5)
        assert pair.cov == pytest.approx(2.0 * pair.var_a, rel=1e-9)
        r, se = pair.ratio()
        assert r == pytest.approx(pair.mean_a / pair.mean_b, rel=1e-12)
        assert se < 0.002


class TestVerdicts:
    def test_classification_rules(self):
        assert classify(1.0, 0.0, 0.02) is Verdict.EQUALITY
        assert classify(1.019, 0.0, 0.02) is Verdict.EQUALITY
        assert classify(0.9, 0.001, 0.02) is Verdict.STRICT
        assert classify(1.1, 0.001, 0.02) is Verdict.VIOLATION
        assert classify(0.975, 0.002, 0.02) is Verdict.INCONCLUSIVE
        # wide SE keeps equality via the 3-sigma branch
        assert classify(1.05, 0.02, 0.02) is Verdict.EQUALITY

    def test_heavy_tail_forces_inconclusive(self):
        params = MomentParams(4, 1, -1.5)
        lhs = MCEstimate(1.0, 0.001, 100, 0, 0.9, 1.1, tail_share=0.05)
        rhs = MCEstimate(1.0, 0.001, 100, 0, 0.0, 50.0, tail_share=0.5)
        rep = _build_report("thm1", params, Ball.unit(4), lhs, rhs, 1.0, 0.02)
        assert rep.verdict is Verdict.INCONCLUSIVE
        assert any("unreliable" in n for n in rep.notes)

    def test_ratio_needs_positive_rhs(self):
        params = MomentParams(3, 1, 0)
        bad = MCEstimate(0.0, 0.0, 10, 0, 0.0, 0.0)
        with pytest.raises(ValueError):
            _build_report("thm1", params, Ball.unit(3), bad, bad, 1.0, 0.02)


class TestLinearEstimators:
    def test_ball_lhs_deterministic(self):
        for d, k, p in ((3, 2, 0.0), (4, 2, 1.0), (5, 3, 0.0)):
            est = estimate_lhs_linear(Ball.unit(d), MomentParams(d, k, p), 500, 1)
            assert est.mean == pytest.approx(kappa(k) ** (d + p), rel=1e-12)
            assert est.std_error <= 1e-12 * est.mean

    def test_rhs_p0_exact(self):
        body = Box.centered(1.0, 3)
        params = MomentParams(3, 2, 0)
        est = estimate_rhs_linear(body, params, 1000, 3)
        assert est.mean == pytest.approx(thm1_constant(params) * 64.0, rel=1e-12)
        assert est.std_error == 0.0

    def test_disk_chord_first_moment(self):
        # chords through the origin of the unit disk have length 2, so the
        # section side is exactly 8; the point side matches within 3 SE
        params = MomentParams(2, 1, 1)
        lhs = estimate_lhs_linear(Ball.unit(2), params, 2000, 5)
        assert lhs.mean == pytest.approx(8.0, rel=1e-12)
        rhs = estimate_rhs_linear(Ball.unit(2), params, 100_000, 6)
        assert abs(rhs.mean - 8.0) <= 3 * rhs.std_error

    def test_high_k_sections_raise_without_fallback(self):
        body = Box.centered(1.0, 5)
        params = MomentParams(5, 4, 0.0)
        with pytest.raises(UnsupportedExactSectionError):
            estimate_lhs_linear(body, params, 100, 1)
        est = estimate_lhs_linear(body, params, 200, 1, mc_section_fallback=True)
        assert est.mean > 0


class TestVerify:
    def test_ball_equality_exact(self):
        rep = verify("thm1", Ball.unit(3), MomentParams(3, 2, 0), 100, 7)
        assert rep.verdict is Verdict.EQUALITY
        assert rep.ratio == pytest.approx(1.0, abs=1e-12)

    def test_ellipsoid_equality(self):
        ell = Ellipsoid.from_semiaxes([1, 2, 3])
        rep = verify("thm1", ell, MomentParams(3, 2, 1), 50_000, 12345)
        assert rep.verdict is Verdict.EQUALITY
        assert abs(rep.ratio - 1.0) <= 0.02

    def test_box_strict(self):
        rep = verify("thm1", Box.centered(1.0, 3), MomentParams(3, 2, 1), 20_000, 7, eq_tol=0.005)
        assert rep.verdict is Verdict.STRICT

    def test_aliases_validate(self):
        with pytest.raises(ValueError):
            verify("busemann", Ball.unit(3), MomentParams(3, 2, 1), 100, 0)
        with pytest.raises(ValueError):
            verify("busemann-simplex", Ball.unit(3), MomentParams(3, 2, 1), 100, 0)
        with pytest.raises(ValueError):
            verify("schneider", Ball.unit(3), MomentParams(3, 2, 0.5), 100, 0)
        with pytest.raises(ValueError):
            verify("nope", Ball.unit(3), MomentParams(3, 2, 0), 100, 0)

    def test_full_dimensional_simplex_moment(self):
        # k = d: the section side is |K|^{d+p} exactly
        rep = verify("busemann-simplex", Ball.unit(3), MomentParams(3, 3, 1), 30_000, 9)
        assert rep.lhs.std_error == 0.0
        assert rep.verdict is Verdict.EQUALITY
        rep = verify("blaschke-groemer", Ball.unit(2), MomentParams(2, 2, 1), 30_000, 9)
        assert rep.verdict is Verdict.EQUALITY

    def test_scale_covariance(self):
        # replacing K by 2K leaves the ratio invariant (same seed)
        for body, scaled in (
            (Ellipsoid.from_semiaxes([1, 2, 3]), Ellipsoid.from_semiaxes([2, 4, 6])),
            (Box.centered(1.0, 3), Box.centered(2.0, 3)),
        ):
            params = MomentParams(3, 2, 1)
            r1 = verify("thm1", body, params, 10_000, 77)
            r2 = verify("thm1", scaled, params, 10_000, 77)
            lam_pow = 2.0 ** (params.k * (params.d + params.p))
            assert r2.lhs.mean == pytest.approx(lam_pow * r1.lhs.mean, rel=1e-12)
            drift = abs(r2.ratio - r1.ratio)
            assert drift <= 2 * math.hypot(r1.ratio_std_error, r2.ratio_std_error) + 1e-12

    def test_rotation_invariance(self, rng):
        body = Ellipsoid.from_semiaxes([1.0, 1.7, 2.4])
        R = random_rotation(rng, 3)
        params = MomentParams(3, 2, 1)
        r1 = verify("thm1", body, params, 40_000, 101)
        r2 = verify("thm1", rotate_body(body, R), params, 40_000, 202)
        assert abs(r1.ratio - r2.ratio) <= 2 * math.hypot(
            r1.ratio_std_error, r2.ratio_std_error
        )

    def test_standard_body_grid_never_violates(self, rng):
        d = 3
        bodies = standard_test_bodies(rng, d)
        for body in bodies:
            for k in (1, 2):
                base = -d + k + 1
                for p in (base + 0.5, 0.0, 1.0, 2.0):
                    params = MomentParams(d, k, float(p))
                    rep = verify("thm1", body, params, 8000, 31)
                    assert rep.verdict is not Verdict.VIOLATION, (body.describe(), k, p)
                    assert rep.ratio <= 1.0 + 4 * rep.ratio_std_error + 1e-9

    def test_thm2_grid_never_violates(self, rng):
        d = 3
        bodies = [Ball.unit(d), random_centered_ellipsoid(rng, d), Box.centered(1.0, d)]
        for body in bodies:
            for k in (1, 2):
                for p in (0.0, 1.0):
                    rep = verify("thm2", body, params := MomentParams(d, k, p), 8000, 33)
                    assert rep.verdict is not Verdict.VIOLATION, (body.describe(), k, p)

    def test_symmetric_bodies_k1_equality(self, rng):
        # chord-moment identity holds for origin-symmetric bodies
        d = 3
        for body in (Ball.unit(d), random_centered_ellipsoid(rng, d), Box.centered(1.0, d)):
            rep = verify("thm1", body, MomentParams(d, 1, 2.0), 60_000, 13)
            assert rep.verdict is Verdict.EQUALITY, body.describe()


class TestIdentityChecks:
    def test_linear_box(self):
        rep = identity_check("linear", Box.centered(1.0, 2), 2, 2.0, 50_000, 3)
        assert rep.verdict is Verdict.EQUALITY
        assert rep.theorem == "identity-linear"

    def test_linear_ball_exact_closed_form(self):
        rep = identity_check("linear", Ball.unit(3), 3, 0.0, 2000, 3)
        assert rep.lhs.mean == pytest.approx(8.0, rel=1e-12)  # (2^d/kappa_d)|K|
        assert rep.verdict is Verdict.EQUALITY

    def test_linear_simplex_not_an_identity(self):
        # for bodies that are not origin-symmetric the chord-moment relation
        # is a strict inequality; for the standard simplex in the plane at
        # p=2 the exact ratio is 1/8 (both sides reduce to the same radial
        # integral, counted once on the section side and 2^{d+p} times with
        # the doubling constant on the point side)
        rep = identity_check("linear", Simplex.standard(2), 2, 2.0, 60_000, 5)
        assert rep.verdict is Verdict.STRICT
        assert abs(rep.ratio - 0.125) <= 4 * rep.ratio_std_error

    def test_affine_adjudication(self):
        res = identity_check("affine", Ball.unit(2), 2, 0.0, 50_000, 3)
        assert isinstance(res, AffineIdentityResult)
        assert res.consistent == "doubled"
        assert res.printed_z > 5.0
        assert res.doubled_z <= 3.0
        assert res.fitted_constant == pytest.approx(res.doubled_constant, rel=0.01)
        assert res.report.verdict is Verdict.EQUALITY

    def test_affine_nonzero_moment(self):
        res = identity_check("affine", Box.centered(1.0, 2), 2, 1.0, 50_000, 11)
        assert res.consistent == "doubled"
        assert res.printed_z > 5.0

    def test_bad_family(self):
        with pytest.raises(ValueError):
            identity_check("quadratic", Ball.unit(2), 2, 0.0, 100, 0)


class TestDecompositionChecks:
    def test_linear_box(self):
        rep = bp_check("linear", Box.centered(1.0, 3), 2, 0.0, 2000, 200, 5)
        assert rep.lhs.mean == pytest.approx(64.0, rel=1e-12)
        assert rep.verdict is Verdict.EQUALITY

    def test_linear_ball_k1(self):
        rep = bp_check("linear", Ball.unit(3), 1, 0.0, 2000, 200, 5)
        assert rep.verdict is Verdict.EQUALITY

    def test_affine_disk(self):
        rep = bp_check("affine", Ball.unit(2), 1, 0.0, 2000, 200, 5)
        assert rep.lhs.mean == pytest.approx(math.pi**2, rel=1e-12)
        assert rep.verdict is Verdict.EQUALITY

    def test_affine_simplex_p1(self):
        rep = bp_check("affine", Simplex.standard(2), 1, 1.0, 3000, 300, 5)
        assert rep.verdict is Verdict.EQUALITY

    def test_validation(self):
        with pytest.raises(ValueError):
            bp_check("linear", Ball.unit(3), 3, 0.0, 100, 10, 0)
        with pytest.raises(ValueError):
            bp_check("linear", Ball.unit(3), 1, -0.5, 100, 10, 0)
        with pytest.raises(ValueError):
            bp_check("diagonal", Ball.unit(3), 1, 0.0, 100, 10, 0)

    def test_inner_sampler_stall(self):
        # a bounding disk vastly larger than the section stalls and raises
        body = Box.centered(1.0, 3)
        U = np.eye(3)[:, :2]
        with pytest.raises(RejectionStallError):
            _sample_in_section(
                body, U, np.zeros(3), np.zeros(2), 1e5, 2000, fold_seed(1, "x"), 0
            )


class TestCrofton:
    def test_ball_values(self):
        est = crofton_intrinsic(Ball.unit(3), 2, 20_000, 11)
        assert est.mean == pytest.approx(4.0, rel=1e-9)  # always-hit: exact
        est = crofton_intrinsic(Ball.unit(3), 1, 20_000, 11)
        assert est.mean == pytest.approx(2 * math.pi, rel=1e-9)

    def test_unit_cube(self):
        est = crofton_intrinsic(Box(np.zeros(3), np.ones(3)), 2, 40_000, 11)
        assert abs(est.mean - 3.0) <= 3 * est.std_error

    def test_validation(self):
        with pytest.raises(ValueError):
            crofton_intrinsic(Ball.unit(3), 3, 100, 0)


class TestProbabilisticForm:
    def test_linear_delegates(self):
        r1 = verify_probabilistic("thm1", Ball.unit(3), MomentParams(3, 2, 0), 1000, 7)
        r2 = verify("thm1", Ball.unit(3), MomentParams(3, 2, 0), 1000, 7)
        assert r1.ratio == r2.ratio and r1.verdict == r2.verdict

    def test_ball_equality(self):
        rep = verify_probabilistic("thm2", Ball.unit(3), MomentParams(3, 2, 0), 30_000, 7)
        assert rep.verdict is Verdict.EQUALITY
        assert abs(rep.ratio - 1.0) <= 0.02

    def test_agrees_with_direct_form(self):
        body = Box.centered(1.0, 3)
        params = MomentParams(3, 2, 1)
        r1 = verify_probabilistic("thm2", body, params, 40_000, 7, eq_tol=0.005)
        r2 = verify("thm2", body, params, 40_000, 7, eq_tol=0.005)
        assert r1.verdict == r2.verdict == Verdict.STRICT

    def test_noisy_intrinsic_volume_inconclusive(self, rng):
        body = random_hpolytope(rng, 3)
        rep = verify_probabilistic("thm2", body, MomentParams(3, 2, 0), 300, 7)
        assert rep.verdict is Verdict.INCONCLUSIVE  # SE of V_{d-k} above 1%
