import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_passive
from passreg.closed_loop import assemble
from passreg.controllers import SignalSpec, build_fin_dim, build_fin_dim_real
from passreg.lti import StateSpaceSystem, check_passive
from passreg.pde_models import example_wave_distributed, heat_reference, heat_signal
from passreg.regulation import (
    InconsistentSystem,
    InsufficientData,
    MissingInternalModel,
    TrajectoryResult,
    WindowExceedsTrajectory,
    check_regulation_conditions,
    compatible_initial_state,
    compute_pi_ext,
    compute_pi_ext_alt,
    compute_q_ext,
    error_formula_check,
    eval_signal,
    fit_error_rate,
    passive_perturbation,
    pointwise_error_decay,
    propagate_homogeneous,
    simulate,
    sliding_error_integral,
    steady_state_entries,
)
from passreg.stability import spectral_abscissa


def toy_loop(freqs=(1.0,), D_c1=1.0):
    plant = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    ctrl = build_fin_dim(list(freqs), 1, gains=1.0, D_c1=D_c1)
    return plant, ctrl, assemble(plant, ctrl)


def traj_from(t, e, dt):
    return TrajectoryResult(np.asarray(t), np.asarray(e).reshape(-1, 1), dt=dt)


class TestSignals:
    def test_constant_reference(self):
        sig = SignalSpec(((0.0, 2.0, None),))
        w, y = eval_signal(sig, [0.0, 1.5])
        assert np.allclose(y, 2.0) and w.shape == (2, 0)

    @pytest.mark.parametrize("t", [0.0, 0.25, 1.0])
    def test_wave_distributed_reference_closed_form(self, t):
        sig = example_wave_distributed().signal
        _, y = eval_signal(sig, t)
        assert y[0] == pytest.approx(np.sin(np.pi * t) + np.cos(2 * np.pi * t) / 4, abs=1e-14)

    def test_heat_reference_series(self):
        sig = heat_signal(N_S=41)
        t = np.linspace(0, 4, 33)
        w, y = eval_signal(sig, t)
        assert np.max(np.abs(y[:, 0] - heat_reference(t))) < 2e-4
        assert np.allclose(w[:, 0], 0.5 * np.sin(np.pi * t), atol=1e-14)

    def test_empty_spec_is_zero(self):
        w, y = eval_signal(SignalSpec((), p=2, m_d=1), np.linspace(0, 1, 5))
        assert np.all(y == 0) and y.shape == (5, 2) and w.shape == (5, 1)


class TestSlidingIntegral:
    def test_zero_error(self):
        t = np.linspace(0, 5, 501)
        s, v = sliding_error_integral(traj_from(t, np.zeros_like(t), 0.01))
        assert np.all(v == 0) and s[-1] == pytest.approx(4.0)

    def test_exponential_error(self):
        t = np.linspace(0, 6, 6001)
        s, v = sliding_error_integral(traj_from(t, np.exp(-t), 1e-3))
        assert np.allclose(v, (1 - np.exp(-1)) * np.exp(-s), rtol=1e-6)

    def test_window_too_long(self):
        t = np.linspace(0, 0.5, 51)
        with pytest.raises(WindowExceedsTrajectory):
            sliding_error_integral(traj_from(t, t, 0.01))

    @given(st.floats(min_value=0.2, max_value=2.0))
    def test_nonnegative_for_any_window(self, window):
        t = np.linspace(0, 4, 401)
        _, v = sliding_error_integral(traj_from(t, np.cos(3 * t), 0.01), window)
        assert np.all(v >= 0)


class TestFitErrorRate:
    def test_exponential(self):
        t = np.linspace(0, 10, 200)
        m = fit_error_rate(t, np.exp(-t))
        assert m.kind == "Exponential" and m.parameters["rate"] == pytest.approx(1.0, rel=1e-6)

    def test_polynomial(self):
        t = np.linspace(1, 200, 400)
        m = fit_error_rate(t, t ** (-2 / 3))
        assert m.kind == "Polynomial" and m.alpha == pytest.approx(1.5, rel=1e-6)

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            fit_error_rate(np.linspace(1, 2, 8), np.ones(8))


class TestRegulatorEquations:
    def test_zero_signal_gives_zero(self):
        plant, ctrl, _ = toy_loop()
        sig = SignalSpec(((1.0, 0.0, None),))
        (e,) = compute_pi_ext(plant, ctrl, sig)
        assert not np.any(e.pi1) and not np.any(e.pi2) and not np.any(e.u_k)

    def test_scalar_toy(self):
        plant, ctrl, _ = toy_loop()
        sig = SignalSpec(((1.0, 1.0, None),))
        (e,) = compute_pi_ext(plant, ctrl, sig)
        # P(i) = 1/(1+i); the plant must reproduce y = 1 at steady state
        assert e.u_k[0] == pytest.approx(1 + 1j)
        assert e.pi1[0] == pytest.approx(1.0)

    def test_missing_mode(self):
        plant, ctrl, _ = toy_loop()
        with pytest.raises(MissingInternalModel):
            compute_pi_ext(plant, ctrl, SignalSpec(((2.0, 1.0, None),)))

    def test_three_paths_agree_on_wave_loop(self):
        ex = example_wave_distributed()
        cl = assemble(ex.plant, ex.ctrl)
        a = compute_pi_ext(ex.plant, ex.ctrl, ex.signal)
        b = compute_pi_ext_alt(ex.plant, ex.ctrl, ex.signal)
        c = steady_state_entries(cl, ex.signal)
        for ea, eb, xc in zip(a, b, c):
            assert np.allclose(ea.state(), eb.state(), atol=1e-10)
            assert np.allclose(ea.state(), xc, atol=1e-10)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_pi_ext_solves_sylvester_rows(self, seed):
        rng = np.random.default_rng(seed)
        plant = random_passive(rng, 5, p=1, m_d=1, strict=0.2)
        freqs = [-1.5, 0.0, 2.0]
        ctrl = build_fin_dim(freqs, 1, gains=1.0, D_c1=1.0)
        cl = assemble(plant, ctrl)
        entries = tuple((w, rng.normal() + 1j * rng.normal(), rng.normal()) for w in freqs)
        sig = SignalSpec(entries, p=1, m_d=1)
        for (w, y, wd), e in zip(sig.entries, compute_pi_ext(plant, ctrl, sig)):
            x = e.state()
            lhs = 1j * w * x
            rhs = cl.A_e @ x + cl.B_e @ np.concatenate([wd, y])
            assert np.allclose(lhs, rhs, atol=1e-8)
            assert np.allclose(cl.C_e @ x + cl.D_e @ np.concatenate([wd, y]), 0, atol=1e-8)

    def test_q_ext_single_frequency(self):
        _, _, cl = toy_loop()
        sig = SignalSpec(((1.0, 1.0, None),))
        (x,) = steady_state_entries(cl, sig)
        assert np.allclose(compute_q_ext(cl, sig), 1j * x)


class TestSummability:
    def entries(self, decay):
        plant, ctrl, _ = toy_loop(freqs=range(1, 41))
        sig = SignalSpec(tuple((float(k), decay(k), None) for k in range(1, 41)))
        return compute_pi_ext(plant, ctrl, sig)

    def test_geometric_summable(self):
        rows = check_regulation_conditions(self.entries(lambda k: 0.5**k))
        assert all(r.summable for r in rows if r.name in ("u_l1", "pi1_l1", "pi2_l2"))

    def test_harmonic_divergent(self):
        rows = {r.name: r for r in check_regulation_conditions(self.entries(lambda k: 1.0 / k))}
        assert not rows["pi1_l1"].summable
        assert rows["pi1_l1"].tail_slope == pytest.approx(-1.0, abs=0.05)

    def test_partial_sums_monotone(self):
        for r in check_regulation_conditions(self.entries(lambda k: 1.0 / k**2)):
            assert np.all(np.diff(r.partial_sums) >= 0)


class TestInitialState:
    def test_compatible_state_solves_constraint(self):
        ex = example_wave_distributed()
        x0 = ex.x0
        z0 = compatible_initial_state(ex.plant, ex.ctrl, x0, [0.3])
        assert np.allclose(ex.ctrl.C_c @ z0, ex.ctrl.D_c @ (ex.plant.C @ x0 - 0.3))

    def test_inconsistent(self):
        plant = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
        ctrl = build_fin_dim([1.0], 1, D_c1=1.0).replace(C_c=np.zeros((1, 1)))
        with pytest.raises(InconsistentSystem):
            compatible_initial_state(plant, ctrl, [1.0], [0.0])


class TestSimulation:
    def test_zero_signal_zero_state(self):
        _, _, cl = toy_loop()
        traj = simulate(cl, SignalSpec(()), np.zeros(cl.dim), 1.0, 0.01)
        assert np.all(traj.error_norms == 0)

    def test_dt_resolution_check(self):
        _, _, cl = toy_loop(freqs=(10.0,))
        with pytest.raises(ValueError):
            simulate(cl, SignalSpec(((10.0, 1.0, None),)), np.zeros(cl.dim), 1.0, 0.1)

    def test_error_formula_small_loop(self):
        _, _, cl = toy_loop()
        sig = SignalSpec(((1.0, 1.0, None),))
        dt = 1e-2
        res = error_formula_check(cl, sig, np.zeros(cl.dim), [0.5, 1.0, 2.0], dt)
        assert res.max_deviation <= 10 * dt**2

    def test_error_formula_zero_signal(self):
        _, _, cl = toy_loop()
        x0 = np.ones(cl.dim)
        res = error_formula_check(cl, SignalSpec(()), x0, [1.0], 1e-3)
        assert res.max_deviation < 1e-5

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_midpoint_never_increases_homogeneous_norm(self, seed):
        rng = np.random.default_rng(seed)
        plant = random_passive(rng, 6, p=2)
        ctrl = build_fin_dim([-1.0, 1.0], 2, gains=1.0, D_c1=np.eye(2))
        cl = assemble(plant, ctrl)
        _, norms = propagate_homogeneous(cl.A_e, rng.normal(size=cl.dim), 2.0, 0.05)
        assert np.all(np.diff(norms) <= 1e-12 * norms[0])

    def test_pointwise_decay_of_zero_error(self):
        t = np.linspace(0, 8, 81)
        rows = pointwise_error_decay(traj_from(t, np.zeros_like(t), 0.1))
        assert [r[0] for r in rows] == [1.0, 2.0, 4.0] and all(r[2] == 0 for r in rows)

    def test_csv_columns(self, tmp_path):
        _, _, cl = toy_loop()
        traj = simulate(cl, SignalSpec(((1.0, 1.0, None),)), np.zeros(cl.dim), 0.1, 0.01)
        traj.to_csv(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,error_norm,state_norm" and len(lines) == 12


class TestRobustness:
    def test_perturbed_plant_is_passive_and_regulated(self):
        ex = example_wave_distributed()
        rng = np.random.default_rng(0)
        plant = passive_perturbation(ex.plant, rng)
        assert check_passive(plant).is_passive
        cl = assemble(plant, ex.ctrl)
        assert spectral_abscissa(cl.A_e) < 0
        traj = simulate(cl, ex.signal, np.concatenate([ex.x0, ex.z0]), 12.0, 2e-3, store_states=False)
        s, v = sliding_error_integral(traj)
        assert v[np.argmin(np.abs(s - 10.0))] < v[0]


def test_real_loop_stays_real():
    ctrl = build_fin_dim_real([1.0], 1, gains=1.0, D_c1=1.0)
    plant = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    cl = assemble(plant, ctrl)
    sig = SignalSpec(((-1.0, 0.5, None), (1.0, 0.5, None)), real_valued=True)
    traj = simulate(cl, sig, np.zeros(cl.dim), 1.0, 0.01)
    assert np.isrealobj(traj.errors)
