import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_passive
from passreg.lti import (
    FeedbackNotAdmissible,
    InnerSingular,
    PreconditionViolated,
    SpectrumHit,
    StateSpaceSystem,
    check_idp_invertibility,
    check_passive,
    disturbance_transfer,
    output_feedback,
    resolvent_woodbury,
    transfer,
    verify_operator_lemmas,
)
from passreg.pde_models import build_heat_2d, build_wave_boundary, build_wave_distributed


def scalar(a, b, c, d):
    return StateSpaceSystem([[a]], [[b]], [[c]], [[d]])


class TestStateSpaceSystem:
    def test_rejects_mismatched_dimensions(self):
        with pytest.raises(ValueError):
            StateSpaceSystem(np.eye(2), np.ones((2, 1)), np.ones((2, 2)), np.zeros((2, 1)))

    def test_rejects_nonfinite_entries(self):
        with pytest.raises(ValueError):
            StateSpaceSystem([[np.nan]], [[1.0]], [[1.0]], [[0.0]])

    def test_json_round_trip(self, rng):
        sys = random_passive(rng, 4, p=2, m_d=1)
        back = StateSpaceSystem.from_json(json.loads(json.dumps(sys.to_json())))
        for name in ("A", "B", "C", "D", "Bd"):
            assert np.array_equal(getattr(back, name), getattr(sys, name))
        assert (back.n, back.p, back.m_d) == (4, 2, 1)


class TestTransfer:
    def test_zero_input_matrix_gives_feedthrough(self):
        sys = StateSpaceSystem(-np.eye(2), np.zeros((2, 1)), np.ones((1, 2)), [[0.7]])
        assert transfer(sys, 0.3 + 2j)[0, 0] == pytest.approx(0.7)

    def test_scalar_lowpass_at_zero(self):
        assert transfer(scalar(-1, 1, 1, 0), 0.0)[0, 0] == pytest.approx(1.0)

    def test_spectrum_hit(self):
        with pytest.raises(SpectrumHit):
            transfer(scalar(2.0, 1, 1, 0), 2.0)

    def test_wave_boundary_closed_form(self):
        lam = 1.0
        exact = (1 + np.exp(-2 * lam)) / (1 - np.exp(-2 * lam))
        assert transfer(build_wave_boundary(200), lam)[0, 0].real == pytest.approx(exact, rel=0.02)

    def test_disturbance_transfer_examples(self, rng):
        sys = random_passive(rng, 3)
        assert disturbance_transfer(sys, 1.0).shape == (1, 0)
        sys0 = sys.replace(Bd=sys.B, D=np.zeros((1, 1)))
        assert np.allclose(disturbance_transfer(sys0, 1 + 1j), transfer(sys0, 1 + 1j))

    def test_heat_disturbance_transfer_is_order_inverse_frequency(self):
        # |P_d(i w)| = O(1/w): the product w |P_d(i w)| stays bounded (it
        # even decreases because the disturbance acts away from the sensor)
        plant = build_heat_2d(20)
        w = np.geomspace(2.0, 60.0, 12)
        scaled = np.array([x * abs(disturbance_transfer(plant, 1j * x)[0, 0]) for x in w])
        assert np.all(np.diff(scaled) <= 1e-12)


class TestPassivity:
    def test_examples(self):
        B = np.array([[1.0], [2.0]])
        assert check_passive(StateSpaceSystem(-np.eye(2), B, B.T, [[0.0]])).is_passive
        assert not check_passive(StateSpaceSystem(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), [[0.0]])).is_passive

    @pytest.mark.parametrize("builder", [build_wave_boundary, build_wave_distributed, build_heat_2d])
    def test_discretized_plants_are_passive(self, builder):
        assert check_passive(builder(12)).is_passive

    def test_fem_plant_is_skew_with_adjoint_output(self):
        plant = build_wave_distributed(16)
        assert np.allclose(plant.A + plant.A.T, 0, atol=1e-12)
        assert np.allclose(plant.C, plant.B.T)


class TestOutputFeedback:
    def test_zero_gain_is_identity(self, rng):
        sys = random_passive(rng, 4)
        fb = output_feedback(sys, np.zeros((1, 1)))
        for name in ("A", "B", "C", "D"):
            assert np.allclose(getattr(fb, name), getattr(sys, name))

    def test_scalar_hand_algebra(self):
        fb = output_feedback(scalar(-1, 1, 1, 0), [[1.0]])
        assert (fb.A[0, 0], fb.B[0, 0], fb.C[0, 0], fb.D[0, 0]) == (-2, 1, 1, 0)

    def test_not_admissible(self):
        with pytest.raises(FeedbackNotAdmissible):
            output_feedback(scalar(-1, 1, 1, -1.0), [[1.0]])

    def test_wave_closed_form_real_part(self):
        plant = build_wave_boundary(400)
        D2 = 2.0
        fb = output_feedback(plant, [[D2]])
        for w in (0.3, 1.0, 2.2):
            exact = D2 * np.cos(w) ** 2 / (1 + (D2**2 - 1) * np.cos(w) ** 2)
            assert transfer(fb, 1j * w)[0, 0].real == pytest.approx(exact, abs=0.02)

    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=3))
    def test_preserves_passivity(self, seed, p):
        r = np.random.default_rng(seed)
        sys = random_passive(r, 5, p=p)
        X = r.standard_normal((p, p))
        fb = output_feedback(sys, X @ X.T)
        assert check_passive(fb, tol=1e-8).is_passive

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_transfer_identity(self, seed):
        r = np.random.default_rng(seed)
        sys = random_passive(r, 5, p=2)
        X = r.standard_normal((2, 2))
        K = X @ X.T
        fb = output_feedback(sys, K)
        for _ in range(20):
            lam = r.uniform(0.01, 5) + 1j * r.uniform(-5, 5)
            P = transfer(sys, lam)
            expected = P @ np.linalg.inv(np.eye(2) + K @ P)
            assert np.allclose(transfer(fb, lam), expected, atol=1e-9 * max(1, np.abs(expected).max()))


class TestWoodbury:
    def test_zero_input(self, rng):
        A = -np.eye(3) + rng.standard_normal((3, 3))
        R = resolvent_woodbury((A, np.zeros((3, 1)), np.zeros((1, 3))), np.eye(1), 1j)
        assert np.allclose(R, np.linalg.inv(1j * np.eye(3) - A))

    def test_scalar(self):
        assert resolvent_woodbury(scalar(-1, 1, 1, 0), np.eye(1), 0.0)[0, 0] == pytest.approx(0.5)

    def test_inner_singular(self):
        # Q^{-1} + C R B = 1 + (-1) = 0 at lambda = 0 with A = 1
        with pytest.raises(InnerSingular):
            resolvent_woodbury((np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]])), np.eye(1), 0.0)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_matches_direct_inverse(self, seed):
        r = np.random.default_rng(seed)
        A = r.standard_normal((8, 8)) + 1j * r.standard_normal((8, 8))
        B = r.standard_normal((8, 2))
        C = r.standard_normal((2, 8))
        lam = 1j * r.uniform(-3, 3) + 0.5
        try:
            W = resolvent_woodbury((A, B, C), np.eye(2), lam)
        except (SpectrumHit, InnerSingular):
            return
        direct = np.linalg.inv(lam * np.eye(8) - A + B @ C)
        assert np.linalg.norm(W - direct) <= 1e-8 * np.linalg.norm(direct)


class TestOperatorLemmas:
    def test_tight_examples(self):
        assert verify_operator_lemmas(2 * np.eye(2), np.zeros((2, 2)), 2.0, 0.0).all_hold
        rep = verify_operator_lemmas(np.eye(2), np.eye(2), 1.0, 1.0)
        assert rep.all_hold

    def test_precondition(self):
        with pytest.raises(PreconditionViolated):
            verify_operator_lemmas(np.eye(2), np.zeros((2, 2)), 2.0, 0.0)

    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=5))
    def test_randomized_shifts(self, seed, k):
        r = np.random.default_rng(seed)

        def shifted(shift):
            X = r.standard_normal((k, k)) + 1j * r.standard_normal((k, k))
            H = X - numerics_herm_min(X) * np.eye(k)
            return H + shift * np.eye(k)

        c, d = r.uniform(0, 2), r.uniform(0, 2)
        assert verify_operator_lemmas(shifted(c), shifted(d), c, d).all_hold


def numerics_herm_min(X):
    return np.linalg.eigvalsh(0.5 * (X + X.conj().T))[0]


class TestIdp:
    def test_zero_feedthrough(self):
        rep = check_idp_invertibility([np.eye(1) * (1 + 2j), np.eye(1) * 3], np.zeros((1, 1)))
        assert rep.all_invertible and rep.sup_inverse_norm == pytest.approx(1.0)

    def test_purely_imaginary_sample(self):
        rep = check_idp_invertibility([np.array([[1j]])], np.eye(1))
        assert rep.sup_inverse_norm == pytest.approx(1 / np.sqrt(2))

    def test_wave_samples(self):
        P = [np.array([[(1 + np.exp(-2j * w)) / (1 - np.exp(-2j * w))]]) for w in np.linspace(0.1, 3.0, 30)]
        assert check_idp_invertibility(P, np.eye(1)).all_invertible

    def test_negative_real_part_rejected(self):
        with pytest.raises(PreconditionViolated):
            check_idp_invertibility([np.array([[-1.0]])], np.eye(1))
