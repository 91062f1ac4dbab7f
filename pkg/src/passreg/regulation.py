"""Time-domain regulation experiments and the frequency-domain regulator maps.

Simulation uses the implicit midpoint rule, which is A-stable, second order
and never increases the energy of a contractive homogeneous system.  The
regulator states ``Pi_ext^k`` and the vector ``q_ext`` are evaluated on the
finite frequency list of a :class:`~passreg.controllers.SignalSpec`.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from passreg import numerics
from passreg.controllers import mode_gain
from passreg.lti import (
    SpectrumHit,
    output_feedback,
    resolvent_apply,
    transfer,
)
from passreg.numerics import SingularMatrix
from passreg.stability import fit_decay_curve


class StepMatrixSingular(Exception):
    """``I - dt/2 A_e`` is singular; impossible for a contractive ``A_e``."""


class WindowExceedsTrajectory(ValueError):
    """The trajectory is shorter than the integration window."""


class InsufficientData(ValueError):
    """Too few post-transient points for a rate fit."""


class TransmissionZero(Exception):
    """``P_S(i w_k)`` is numerically singular."""


class InconsistentSystem(Exception):
    """``C_c z0 = D_c (C x0 - y_ref(0))`` has no solution."""


class MissingInternalModel(ValueError):
    """The controller has no mode at a signal frequency."""


# ---------------------------------------------------------------------------
# signals


def eval_signal(sig, t):
    """``(w_dist(t), y_ref(t))`` as finite Fourier sums.

    ``t`` may be a scalar or an array; array input gives arrays with time
    along the first axis.  Real-valued specs return real arrays.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if len(sig) == 0:
        w = np.zeros((t_arr.size, sig.m_d))
        y = np.zeros((t_arr.size, sig.p))
    else:
        phase = np.exp(1j * np.outer(t_arr, sig.frequencies))
        y = phase @ sig.y_coefficients()
        w = phase @ sig.w_coefficients()
        if sig.real_valued:
            y, w = _realify(y), _realify(w)
    if np.ndim(t) == 0:
        return w[0], y[0]
    return w, y


def _realify(v):
    scale = max(1.0, float(np.max(np.abs(v), initial=0.0)))
    if np.max(np.abs(v.imag), initial=0.0) > 1e-10 * scale:
        raise ValueError("real-valued signal produced a complex value")
    return v.real.copy()


def w_ext_samples(sig, times):
    w, y = eval_signal(sig, np.asarray(times, dtype=float))
    return np.hstack([np.asarray(w).reshape(len(times), -1), np.asarray(y).reshape(len(times), -1)])


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryResult:
    times: np.ndarray
    errors: np.ndarray
    states: object = None
    scheme: str = "implicit-midpoint"
    dt: float = 0.0
    state_norms: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.times) != len(self.errors):
            raise ValueError("times and errors differ in length")
        if self.states is not None and len(self.states) != len(self.times):
            raise ValueError("states and times differ in length")

    @property
    def error_norms(self):
        return np.linalg.norm(np.atleast_2d(self.errors.T).T.reshape(len(self.times), -1), axis=1)

    def to_csv(self, path, full_state=False):
        en = self.error_norms
        sn = self.state_norms if self.state_norms is not None else np.full(len(self.times), np.nan)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            head = ["t", "error_norm", "state_norm"]
            if full_state and self.states is not None:
                X = np.asarray(self.states)
                cplx = np.iscomplexobj(X)
                for j in range(X.shape[1]):
                    head += [f"x{j}_re", f"x{j}_im"] if cplx else [f"x{j}"]
            w.writerow(head)
            for i, t in enumerate(self.times):
                row = [f"{t:.10g}", f"{en[i]:.12e}", f"{sn[i]:.12e}"]
                if full_state and self.states is not None:
                    x = self.states[i]
                    if np.iscomplexobj(x):
                        for v in x:
                            row += [f"{v.real:.12e}", f"{v.imag:.12e}"]
                    else:
                        row += [f"{v:.12e}" for v in x]
                w.writerow(row)


def _step_maps(A, B, dt):
    n = A.shape[0]
    L = np.eye(n) - 0.5 * dt * A
    try:
        lu = numerics.lu_factor_checked(L)
    except SingularMatrix as exc:
        raise StepMatrixSingular(str(exc)) from exc
    Phi = scipy.linalg.lu_solve(lu, np.eye(n) + 0.5 * dt * A)
    Psi = scipy.linalg.lu_solve(lu, dt * B) if B is not None and B.size else None
    return Phi, Psi


def signal_omega_max(sig):
    if sig is None or len(sig) == 0:
        return 0.0
    y = np.abs(sig.y_coefficients()).sum(axis=1)
    w = np.abs(sig.w_coefficients()).sum(axis=1) if sig.m_d else np.zeros(len(sig))
    active = (y + w) > 0
    return float(np.max(np.abs(sig.frequencies[active]), initial=0.0))


def simulate(cl, sig, x_e0, t_final, dt, store_states=True, check_dt=True):
    """Implicit-midpoint trajectory of the closed loop.

    ``(I - dt/2 A_e) x_{n+1} = (I + dt/2 A_e) x_n + dt B_e w_ext(t_n + dt/2)``
    and ``e_n = C_e x_n + D_e w_ext(t_n)``.  The one-step map is formed once
    from a single LU factorization.

    Raises ``ValueError`` when ``dt`` exceeds a tenth of the shortest signal
    period.
    """
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    w_max = signal_omega_max(sig)
    if check_dt and w_max > 0 and dt > 0.1 * 2 * np.pi / w_max * (1 + 1e-12):
        raise ValueError(f"dt={dt} does not resolve omega_max={w_max} (need dt <= {0.2 * np.pi / w_max:.4g})")
    A, B, C, D = cl.A_e, cl.B_e, cl.C_e, cl.D_e
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer multiple of dt")
    times = dt * np.arange(steps + 1)
    x = np.asarray(x_e0).reshape(-1)
    if x.shape[0] != A.shape[0]:
        raise ValueError(f"x_e0 has length {x.shape[0]}, expected {A.shape[0]}")
    Phi, Psi = _step_maps(A, B, dt)
    w_nodes = w_ext_samples(sig, times) if sig is not None else np.zeros((steps + 1, B.shape[1]))
    w_mid = w_ext_samples(sig, times[:-1] + 0.5 * dt) if sig is not None else np.zeros((steps, B.shape[1]))
    forcing = w_mid @ Psi.T if Psi is not None else np.zeros((steps, A.shape[0]))
    dtype = np.result_type(Phi, forcing, x, float)
    X = np.empty((steps + 1, A.shape[0]), dtype=dtype) if store_states else None
    norms = np.empty(steps + 1)
    feed = w_nodes @ D.T
    errs = np.empty((steps + 1, C.shape[0]), dtype=np.result_type(C, dtype, feed))
    x = x.astype(dtype)
    for i in range(steps + 1):
        if store_states:
            X[i] = x
        norms[i] = np.linalg.norm(x)
        errs[i] = C @ x + feed[i]
        if i < steps:
            x = Phi @ x + forcing[i]
    return TrajectoryResult(times, errs, X, "implicit-midpoint", dt, norms)


def propagate_homogeneous(A, x0, T, dt):
    """Times and state norms of ``x' = A x`` under implicit midpoint."""
    A = np.asarray(A)
    steps = int(round(T / dt))
    Phi, _ = _step_maps(A, None, dt)
    x = np.asarray(x0).reshape(-1).astype(np.result_type(Phi, x0, float))
    norms = np.empty(steps + 1)
    for i in range(steps + 1):
        norms[i] = np.linalg.norm(x)
        if i < steps:
            x = Phi @ x
    return dt * np.arange(steps + 1), norms


def sliding_error_integral(traj, window=1.0):
    """``(t, int_t^{t+window} ||e(s)|| ds)`` by the trapezoid rule.

    Evaluated at every stored time ``t`` with ``t + window`` inside the
    trajectory.
    """
    t = np.asarray(traj.times)
    if t[-1] - t[0] < window * (1 - 1e-12):
        raise WindowExceedsTrajectory(f"trajectory length {t[-1] - t[0]} < window {window}")
    en = traj.error_norms
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (en[1:] + en[:-1]))])
    ends = t + window
    valid = ends <= t[-1] * (1 + 1e-12) + 1e-12
    starts = t[valid]
    upper = np.interp(ends[valid], t, cum)
    return starts, upper - cum[valid]


def fit_error_rate(times, values, t_min=None, min_points=10):
    """Exponential or polynomial decay law for an error-integral table.

    Points with ``t < t_min`` (default: a quarter of the range) are treated
    as transient and dropped.  Both models are fitted by linear least
    squares in log coordinates and the better residual wins.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if t_min is None:
        t_min = times[0] + 0.25 * (times[-1] - times[0])
    sel = (times >= t_min) & (values > 0) & (times > 0)
    if np.count_nonzero(sel) < min_points:
        raise InsufficientData(f"{np.count_nonzero(sel)} usable points, need {min_points}")
    return fit_decay_curve(times[sel], values[sel])


def pointwise_error_decay(traj, t_start=1.0):
    """Maximum of ``||e(t)||`` over dyadic windows ``[2^j, 2^{j+1}]``.

    The last window is clipped to the trajectory end.  Returns rows
    ``(start, end, max)``.
    """
    t = np.asarray(traj.times)
    en = traj.error_norms
    rows = []
    a = t_start
    while a < t[-1]:
        b = min(2 * a, t[-1])
        sel = (t >= a) & (t <= b)
        rows.append((a, b, float(np.max(en[sel])) if np.any(sel) else 0.0))
        a = 2 * a
    return rows


# ---------------------------------------------------------------------------
# regulator equations


@dataclass(frozen=True)
class PiExtEntry:
    k: int
    omega: float
    pi1: np.ndarray
    pi2: np.ndarray
    u_k: np.ndarray
    basis: np.ndarray = None

    @property
    def z(self):
        """Controller-state component ``V_k pi2``."""
        return self.basis @ self.pi2

    def state(self):
        return np.concatenate([self.pi1, self.z])


def _mode_gain_checked(ctrl, omega):
    Ck, V = mode_gain(ctrl, omega)
    if V.shape[1] == 0:
        raise MissingInternalModel(f"controller has no mode at omega={omega}")
    return Ck, V


def _solve_gain(Ck, rhs):
    if Ck.shape[0] == Ck.shape[1]:
        try:
            return numerics.solve_linear(Ck, rhs)
        except SingularMatrix as exc:
            raise numerics.SingularMatrix(f"mode gain is singular: {exc}") from exc
    return np.linalg.lstsq(Ck, rhs, rcond=None)[0]


def _zero_entry(k, w, plant, ctrl):
    _, V = _mode_gain_checked(ctrl, w)
    return PiExtEntry(k, w, np.zeros(plant.n, dtype=complex), np.zeros(V.shape[1], dtype=complex),
                      np.zeros(plant.p, dtype=complex), V)


def compute_pi_ext(plant, ctrl, sig):
    """``Pi_ext^k`` through the pre-stabilized plant.

    ``u_k = P_S^{-1}(y_k - C^S R(i w_k, A^S) B_d w_k)``,
    ``Pi_1 = R(i w_k, A^S)(B^S u_k + B_d w_k)`` and
    ``Pi_2 = (C_c^k)^{-1}(u_k - D_c2 y_k)``.
    """
    S = output_feedback(plant, ctrl.D_c2)
    out = []
    for k, (w, y, wd) in enumerate(sig.entries):
        if not np.any(y) and not np.any(wd):
            out.append(_zero_entry(k, w, plant, ctrl))
            continue
        lam = 1j * w
        Ck, V = _mode_gain_checked(ctrl, w)
        RBd_w = resolvent_apply(S.A, lam, S.Bd @ wd) if plant.m_d else np.zeros(plant.n, dtype=complex)
        PS = transfer(S, lam)
        try:
            u = numerics.solve_linear(PS, y - S.C @ RBd_w)
        except SingularMatrix as exc:
            raise TransmissionZero(f"P_S(i{w}) is singular") from exc
        pi1 = resolvent_apply(S.A, lam, S.B @ u) + RBd_w
        pi2 = _solve_gain(Ck, u - ctrl.D_c2 @ y)
        out.append(PiExtEntry(k, w, pi1, pi2, u, V))
    return out


def compute_pi_ext_alt(plant, ctrl, sig, path="auto"):
    """Alternate expressions for ``Pi_ext^k``.

    ``path="plant"`` (needs ``i w_k`` in the resolvent set of ``A``):
    ``u~ = P^{-1}(y - P_d w)``, ``Pi_1 = R(A)(B_d w + B u~)``,
    ``Pi_2 = (C_c^k)^{-1} u~`` and ``u_k = u~ + D_c2 y``.

    ``path="feedthrough"`` (needs ``D`` invertible):
    ``Pi_1 = R(A^S - B^S (D^S)^{-1} C^S) B_d w + R(A^S) B^S P_S^{-1} y``,
    then ``u_k = (D^S)^{-1}(y - C^S Pi_1)``.

    ``"auto"`` takes the plant path when possible and falls back to the
    feedthrough path.
    """
    S = output_feedback(plant, ctrl.D_c2)
    out = []
    for k, (w, y, wd) in enumerate(sig.entries):
        if not np.any(y) and not np.any(wd):
            out.append(_zero_entry(k, w, plant, ctrl))
            continue
        lam = 1j * w
        Ck, V = _mode_gain_checked(ctrl, w)
        chosen = path
        if path == "auto":
            try:
                resolvent_apply(plant.A, lam, plant.B)
                chosen = "plant"
            except SpectrumHit:
                chosen = "feedthrough"
        if chosen == "plant":
            P = transfer(plant, lam)
            Pd_w = transfer_d(plant, lam, wd)
            try:
                ut = numerics.solve_linear(P, y - Pd_w)
            except SingularMatrix as exc:
                raise TransmissionZero(f"P(i{w}) is singular") from exc
            src = plant.B @ ut + (plant.Bd @ wd if plant.m_d else 0)
            pi1 = resolvent_apply(plant.A, lam, src)
            pi2 = _solve_gain(Ck, ut)
            u = ut + ctrl.D_c2 @ y
        elif chosen == "feedthrough":
            try:
                DSinv = numerics.solve_linear(S.D, np.eye(plant.p))
            except SingularMatrix as exc:
                raise ValueError("feedthrough path needs an invertible D") from exc
            A_zero = S.A - S.B @ DSinv @ S.C
            PS = transfer(S, lam)
            try:
                PSinv_y = numerics.solve_linear(PS, y)
            except SingularMatrix as exc:
                raise TransmissionZero(f"P_S(i{w}) is singular") from exc
            pi1 = resolvent_apply(S.A, lam, S.B @ PSinv_y)
            if plant.m_d:
                pi1 = pi1 + resolvent_apply(A_zero, lam, S.Bd @ wd)
            u = DSinv @ (y - S.C @ pi1)
            pi2 = _solve_gain(Ck, u - ctrl.D_c2 @ y)
        else:
            raise ValueError(f"unknown path {path!r}")
        out.append(PiExtEntry(k, w, pi1, pi2, u, V))
    return out


def transfer_d(plant, lam, wd):
    if plant.m_d == 0:
        return np.zeros(plant.p, dtype=complex)
    return plant.C @ resolvent_apply(plant.A, lam, plant.Bd @ wd)


def steady_state_entries(cl, sig):
    """``R(i w_k, A_e) B_e w_ext^k`` for every signal entry."""
    out = []
    for w, y, wd in sig.entries:
        wext = np.concatenate([wd, y])
        if not np.any(wext):
            out.append(np.zeros(cl.dim, dtype=complex))
            continue
        out.append(resolvent_apply(cl.A_e, 1j * w, cl.B_e @ wext))
    return out


@dataclass(frozen=True)
class SummabilityRow:
    name: str
    norm: str
    terms: np.ndarray
    partial_sums: np.ndarray
    tail_slope: float
    summable: bool


def _tail_verdict(omegas, terms, threshold=-1.1, tail_fraction=0.5):
    """Log-log slope of the nonzero terms over the upper part of the band.

    With fewer than three distinct frequencies there is no trend to read and
    the finite sum is reported as summable.
    """
    a = np.abs(np.asarray(omegas, dtype=float))
    t = np.asarray(terms, dtype=float)
    nz = (t > 0) & (a > 0)
    a_nz, t_nz = a[nz], t[nz]
    if np.unique(a_nz).size < 3:
        return float("-inf"), True
    cut = np.quantile(a_nz, 1 - tail_fraction)
    sel = a_nz >= cut
    if np.count_nonzero(sel) < 3:
        sel = np.argsort(a_nz)[-3:]
    x, y = np.log(a_nz[sel]), np.log(t_nz[sel])
    if np.ptp(x) == 0:
        return float("-inf"), True
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, bool(slope < threshold)


def check_regulation_conditions(entries, index=None, threshold=-1.1):
    """Partial-sum diagnostics of the summability conditions.

    Tracks the ``l1`` sums of ``||u_k||`` and ``||Pi_1^k||``, the ``l2`` sums
    of ``||Pi_2^k||`` and of ``|w_k| ||Pi_2^k||``.  A sequence is called
    summable when its terms, ordered by ``|k|`` (or ``|w_k|``), decay with a
    log-log tail slope below ``threshold``; the default ``-1.1`` separates
    ``k^{-1}`` (divergent) from ``k^{-1.2}`` and faster.
    """
    omegas = np.array([e.omega for e in entries])
    ks = np.abs(np.asarray(index, dtype=float)) if index is not None else np.abs(omegas)
    seqs = {
        "u_l1": ("l1", np.array([np.linalg.norm(e.u_k) for e in entries])),
        "pi1_l1": ("l1", np.array([np.linalg.norm(e.pi1) for e in entries])),
        "pi2_l2": ("l2", np.array([np.linalg.norm(e.pi2) ** 2 for e in entries])),
        "omega_pi2_l2": ("l2", np.array([(abs(e.omega) * np.linalg.norm(e.pi2)) ** 2 for e in entries])),
    }
    order = np.argsort(ks, kind="stable")
    rows = []
    for name, (kind, terms) in seqs.items():
        slope, ok = _tail_verdict(ks, terms, threshold)
        rows.append(SummabilityRow(name, kind, terms, np.cumsum(terms[order]), slope, ok))
    return rows


def compute_q_ext(cl, sig):
    """``q_ext = sum_k i w_k R(i w_k, A_e) B_e w_ext^k``."""
    q = np.zeros(cl.dim, dtype=complex)
    for (w, _, _), x in zip(sig.entries, steady_state_entries(cl, sig)):
        q += 1j * w * x
    return q


def compatible_initial_state(plant, ctrl, x0, y_ref0):
    """Minimum-norm ``z0`` with ``C_c z0 = D_c (C x0 - y_ref(0))``."""
    rhs = ctrl.D_c @ (plant.C @ np.asarray(x0).reshape(-1) - np.asarray(y_ref0).reshape(-1))
    z0, *_ = np.linalg.lstsq(ctrl.C_c, rhs, rcond=None)
    resid = np.linalg.norm(ctrl.C_c @ z0 - rhs)
    if resid > 1e-10 * max(1.0, np.linalg.norm(rhs)):
        raise InconsistentSystem(f"residual {resid:.3e}")
    if np.isrealobj(ctrl.C_c) and np.isrealobj(rhs):
        z0 = z0.real
    return z0


@dataclass(frozen=True)
class ErrorFormulaResult:
    max_deviation: float
    sample_times: np.ndarray
    forced: np.ndarray
    formula: np.ndarray
    note: str = ""


def error_formula_check(cl, sig, x_e0, sample_times, dt):
    """Forced-simulation error against ``C_e T_e(t) A_e^{-1}(A_e x + B_e w(0) - q_ext)``.

    The homogeneous side uses the matrix exponential, so the deviation is
    the integrator error of the forced run.
    """
    sample_times = np.asarray(sample_times, dtype=float)
    t_final = float(np.max(sample_times))
    traj = simulate(cl, sig, x_e0, t_final, dt, store_states=False)
    idx = np.rint(sample_times / dt).astype(int)
    if np.any(np.abs(idx * dt - sample_times) > 1e-9 * max(1.0, t_final)):
        raise ValueError("sample times must lie on the time grid")
    forced = traj.errors[idx]
    q = compute_q_ext(cl, sig)
    w0 = w_ext_samples(sig, [0.0])[0]
    rhs = cl.A_e @ np.asarray(x_e0) + cl.B_e @ w0 - q
    try:
        v0 = numerics.solve_linear(cl.A_e, rhs)
    except SingularMatrix as exc:
        raise SpectrumHit("A_e is singular") from exc
    formula = np.array([cl.C_e @ (scipy.linalg.expm(cl.A_e * t) @ v0) for t in sample_times])
    dev = float(np.max(np.linalg.norm(forced - formula, axis=1)))
    return ErrorFormulaResult(dev, sample_times, forced, formula)


def passive_perturbation(plant, rng, magnitude=0.01):
    """Random structured perturbation that leaves the passivity form unchanged.

    ``dA = mag * skew(A o R)``, ``dB = mag * B o R'`` and ``dC = dB^*``;
    ``(A + A^*)/2`` and ``B - C^*`` are untouched, so passivity is exact.
    """
    R = rng.uniform(-1, 1, plant.A.shape)
    X = plant.A * R
    dA = magnitude * 0.5 * (X - X.conj().T)
    dB = magnitude * plant.B * rng.uniform(-1, 1, plant.B.shape)
    return plant.replace(A=plant.A + dA, B=plant.B + dB, C=plant.C + dB.conj().T,
                         label=f"{plant.label}+perturbed")

