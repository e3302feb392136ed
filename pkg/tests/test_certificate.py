import numpy as np
import pytest

from demix import (
    DegenerateSupportError,
    GenSpec,
    GroundTruth,
    SupportSet,
    build_certificate,
    generate_instance,
    gram_omega,
    report_to_text,
    verify_conditions,
    verify_lemma_bounds,
    xi_value,
)
from demix.certificate import attach_lemma_flags, _complement_factors

from helpers import collect_admissible_instances, gram_kron_oracle, gram_rowbyrow_oracle


class TestGramOmega:
    def test_rank_zero_identity_dictionary(self):
        R = np.eye(4)
        U = np.zeros((4, 0))
        V = np.zeros((5, 0))
        sup = SupportSet([(0, 0), (1, 3), (2, 2)])
        assert np.allclose(gram_omega(R, U, V, sup), np.eye(3), atol=1e-14)

    def test_single_element_closed_form(self):
        rng = np.random.default_rng(0)
        R = rng.standard_normal((6, 3))
        R /= np.linalg.norm(R, axis=0)
        U = np.linalg.qr(rng.standard_normal((6, 2)))[0][:, :2]
        V = np.linalg.qr(rng.standard_normal((5, 2)))[0][:, :2]
        sup = SupportSet([(1, 2)])
        K, W = _complement_factors(R, U, V)
        got = gram_omega(R, U, V, sup)
        assert got.shape == (1, 1)
        assert got[0, 0] == pytest.approx(K[1, 1] * W[2, 2], abs=1e-14)

    def test_matches_kronecker_oracle(self):
        inst, truth = generate_instance(GenSpec(6, 6, 4, 2, 5, 1))
        got = gram_omega(inst.R, truth.U, truth.V, truth.support)
        assert np.abs(got - gram_kron_oracle(inst.R, truth.U, truth.V,
                                             truth.support)).max() <= 1e-12

    def test_matches_rowbyrow_oracle(self):
        inst, truth = generate_instance(GenSpec(6, 6, 4, 2, 5, 2))
        got = gram_omega(inst.R, truth.U, truth.V, truth.support)
        assert np.abs(got - gram_rowbyrow_oracle(inst.R, truth.U, truth.V,
                                                 truth.support)).max() <= 1e-12

    def test_depends_only_on_support(self):
        inst, truth = generate_instance(GenSpec(8, 8, 4, 2, 6, 3))
        scaled = GroundTruth(truth.U, truth.S, truth.V, truth.A0 * 3.5)
        g1 = gram_omega(inst.R, truth.U, truth.V, truth.support)
        g2 = gram_omega(inst.R, scaled.U, scaled.V, scaled.support)
        assert np.abs(g1 - g2).max() <= 1e-14


class TestBuildCertificate:
    def test_empty_support(self):
        rng = np.random.default_rng(4)
        U = np.linalg.qr(rng.standard_normal((6, 2)))[0][:, :2]
        V = np.linalg.qr(rng.standard_normal((6, 2)))[0][:, :2]
        truth = GroundTruth(U, [2.0, 1.0], V, np.zeros((4, 6)))
        R = np.linalg.qr(rng.standard_normal((6, 4)))[0][:, :4]
        gamma, w, x_cert = build_certificate(R, truth, 0.5)
        assert w.size == 0
        assert np.abs(x_cert).max() == 0.0
        assert np.allclose(gamma, U @ V.T, atol=1e-15)
        xi = xi_value(R, U, V)
        above = verify_conditions(R, truth, xi * 1.5, gamma)
        below = verify_conditions(R, truth, xi * 0.5, gamma)
        assert above.c3_value <= 1e-12
        assert above.passes
        assert not below.passes

    def test_identity_dictionary_hand_solution(self):
        # n = m = d = 2, low-rank part along e2, single support cell (0, 0):
        # the 1x1 Gram is 1 and w = lam * sign, so the correction is
        # w * e1 e1' and Gamma = e2 e2' + w * e1 e1'.
        U = np.eye(2)[:, 1:]
        V = np.eye(2)[:, 1:]
        A0 = np.zeros((2, 2))
        A0[0, 0] = -1.0
        truth = GroundTruth(U, [3.0], V, A0)
        lam = 0.4
        gamma, w, x_cert = build_certificate(np.eye(2), truth, lam)
        assert w.shape == (1,)
        assert w[0] == pytest.approx(-lam, abs=1e-14)
        expected = np.array([[-lam, 0.0], [0.0, 1.0]])
        assert np.abs(gamma - expected).max() <= 1e-14
        cert = verify_conditions(np.eye(2), truth, lam, gamma)
        assert cert.c1_residual <= 1e-14 and cert.c2_residual <= 1e-14
        assert cert.c3_value == pytest.approx(lam, abs=1e-14)
        # the low-rank factors sit exactly on a dictionary atom here, so the
        # off-support entry Gamma[1, 1] = 1 defeats the fourth condition
        assert cert.c4_value == pytest.approx(1.0, abs=1e-14)
        assert not cert.passes

    def test_degenerate_support_raises(self):
        # duplicated dictionary atom, both copies in the support
        R = np.column_stack([np.eye(4)[:, 0], np.eye(4)[:, 0], np.eye(4)[:, 1]])
        U = np.eye(4)[:, 2:3]
        V = np.eye(5)[:, :1]
        A0 = np.zeros((3, 5))
        A0[0, 0] = 1.0
        A0[1, 0] = -1.0
        truth = GroundTruth(U, [1.0], V, A0)
        with pytest.raises(DegenerateSupportError, match="eigenvalue"):
            build_certificate(R, truth, 0.3)

    def test_construction_forces_first_two_conditions(self):
        inst, truth = generate_instance(GenSpec(20, 20, 8, 2, 6, 6))
        lam = 0.2
        gamma, _, _ = build_certificate(inst.R, truth, lam)
        cert = verify_conditions(inst.R, truth, lam, gamma)
        assert cert.c1_residual <= 1e-8
        assert cert.c2_residual <= 1e-8

    def test_refinement_weakly_tightens(self):
        inst, truth = generate_instance(GenSpec(20, 20, 8, 2, 6, 7))
        lam = 0.2
        rough, _, _ = build_certificate(inst.R, truth, lam, refine_steps=0)
        tight, _, _ = build_certificate(inst.R, truth, lam, refine_steps=3)
        c_rough = verify_conditions(inst.R, truth, lam, rough)
        c_tight = verify_conditions(inst.R, truth, lam, tight)
        assert c_tight.c2_residual <= c_rough.c2_residual + 1e-15


class TestVerification:
    def test_admissible_instances_certify_and_bound(self):
        for inst, truth, rep, theory in collect_admissible_instances(6):
            lam = (theory.lambda_min + theory.lambda_max) / 2.0
            gamma, _, _ = build_certificate(inst.R, truth, lam)
            cert = verify_conditions(inst.R, truth, lam, gamma)
            assert cert.c1_residual <= 1e-8 and cert.c2_residual <= 1e-8
            assert cert.c3_value < 1.0
            assert cert.c4_value < lam
            assert cert.passes
            flags = verify_lemma_bounds(cert, rep, theory, lam, truth.r, truth.s)
            assert flags.all_hold and not flags.vacuous

    def test_weight_below_interval_breaks_c4(self):
        inst, truth = generate_instance(GenSpec(12, 12, 5, 2, 6, 77))
        xi = xi_value(inst.R, truth.U, truth.V)
        lam = xi / 2.0
        gamma, _, _ = build_certificate(inst.R, truth, lam)
        cert = verify_conditions(inst.R, truth, lam, gamma)
        assert cert.c4_value >= lam
        assert not cert.passes

    def test_vacuous_flags_for_empty_support(self):
        rng = np.random.default_rng(8)
        U = np.linalg.qr(rng.standard_normal((6, 1)))[0]
        V = np.linalg.qr(rng.standard_normal((6, 1)))[0]
        truth = GroundTruth(U, [1.0], V, np.zeros((4, 6)))
        R = np.linalg.qr(rng.standard_normal((6, 4)))[0][:, :4]
        gamma, _, _ = build_certificate(R, truth, 1.0)
        cert = verify_conditions(R, truth, 1.0, gamma)
        flags = verify_lemma_bounds(cert, None, None, 1.0, truth.r, 0)
        assert flags.vacuous and flags.all_hold

    def test_rank_zero_sigma_bound_direct(self):
        # with no low-rank part the support-row Gram reduces to dictionary
        # Gram blocks, so its smallest singular value dominates sqrt(F_L)
        from demix import TheoryInputs, check_assumptions, frame_bounds
        from demix.measures import IncoherenceReport

        rng = np.random.default_rng(12)
        R = rng.standard_normal((9, 5))
        R /= np.linalg.norm(R, axis=0)
        A0 = np.zeros((5, 7))
        A0[1, 2] = 1.0
        A0[3, 4] = -1.0
        A0[0, 2] = 1.0
        truth = GroundTruth(np.zeros((9, 0)), np.zeros(0), np.zeros((7, 0)), A0)
        lam = 0.5
        gamma, _, _ = build_certificate(R, truth, lam)
        cert = verify_conditions(R, truth, lam, gamma)
        f_lower, f_upper = frame_bounds(R)
        assert cert.sigma_min_a_omega >= np.sqrt(f_lower) - 1e-9
        rep = IncoherenceReport(mu=0.0, gamma_ur=0.0, gamma_v=0.0, xi=0.0,
                                regime="thin", f_lower=f_lower, f_upper=f_upper)
        inputs = TheoryInputs(n=9, m=7, d=5, r=1, s=truth.s, gamma_ur=0.0,
                              gamma_v=0.0, mu=0.0, xi=0.0,
                              f_lower=f_lower, f_upper=f_upper)
        theory = check_assumptions(inputs)
        flags = verify_lemma_bounds(cert, rep, theory, lam, truth.r, truth.s)
        assert flags.sigma_min_ok

    def test_q_norm_matches_row_loop(self):
        inst, truth = generate_instance(GenSpec(10, 10, 5, 2, 5, 9))
        lam = 0.3
        gamma, _, _ = build_certificate(inst.R, truth, lam)
        cert = verify_conditions(inst.R, truth, lam, gamma)
        # recompute row by row from scratch
        K, W = _complement_factors(inst.R, truth.U, truth.V)
        gram = gram_omega(inst.R, truth.U, truth.V, truth.support)
        inv = np.linalg.inv(gram)
        sup = set(truth.support.pairs)
        best = 0.0
        for i in range(truth.d):
            for j in range(truth.m):
                if (i, j) in sup:
                    continue
                row = np.array([
                    K[i, si] * W[j, sj] for si, sj in truth.support.pairs
                ])
                best = max(best, float(np.abs(row @ inv).sum()))
        assert cert.q_norm_inf_inf == pytest.approx(best, abs=1e-12)
        assert not cert.q_rows_sampled

    def test_sampled_q_rows_flagged_and_lower(self):
        inst, truth = generate_instance(GenSpec(10, 10, 5, 2, 5, 10))
        lam = 0.3
        gamma, _, _ = build_certificate(inst.R, truth, lam)
        full = verify_conditions(inst.R, truth, lam, gamma)
        sampled = verify_conditions(inst.R, truth, lam, gamma, q_row_cap=10, seed=1)
        assert sampled.q_rows_sampled
        assert sampled.q_norm_inf_inf <= full.q_norm_inf_inf + 1e-12


class TestSerialization:
    def test_flat_text_round_trip(self):
        from demix import LemmaFlags

        inst, truth = generate_instance(GenSpec(10, 10, 5, 2, 5, 11))
        lam = 0.3
        gamma, _, _ = build_certificate(inst.R, truth, lam)
        cert = verify_conditions(inst.R, truth, lam, gamma)
        cert = attach_lemma_flags(cert, LemmaFlags(True, True, True, True))
        text = report_to_text(cert)
        parsed = {}
        for line in text.strip().splitlines():
            key, _, value = line.partition(" = ")
            parsed[key] = value
        assert float(parsed["c1_residual"]) == cert.c1_residual
        assert float(parsed["c4_value"]) == cert.c4_value
        assert parsed["passes"] == ("true" if cert.passes else "false")
        assert parsed["lemma_vacuous"] == "false"
