"""Frequency-domain stability diagnostics for the closed loop.

Resolvent scans along the imaginary axis, growth-exponent fits of their
peak envelope, the ``M_log`` machinery that turns a resolvent bound into a
decay rate, and hypothesis checkers for the strong, exponential and
non-uniform stability results.

Every verdict here refers to the resolved band of a finite truncation: a
finite-dimensional ``A_e`` with no imaginary eigenvalues always has a bounded
resolvent, so "unbounded" means "growing across the band".
"""

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from passreg import numerics
from passreg.closed_loop import ClosedLoopSystem, resolvent_norm, sigma_min_floor
from passreg.controllers import mode_gain
from passreg.lti import SpectrumHit, output_feedback, transfer

DENSE_LIMIT = 160


class InsufficientPeaks(ValueError):
    """Fewer than three usable local maxima in the fit window."""


class OutOfTable(ValueError):
    """Frequency outside the tabulated range of ``M``."""


class OutOfRange(ValueError):
    """Value outside the range of ``M_log`` over the table."""


def spectral_abscissa(A):
    """``max re sigma(A)``."""
    A = A.A_e if isinstance(A, ClosedLoopSystem) else np.asarray(A)
    ev = numerics.spectrum(A)
    return float(np.max(ev.real)) if ev.size else -np.inf


# ---------------------------------------------------------------------------
# resolvent scans


@dataclass(frozen=True)
class ResolventScan:
    grid: np.ndarray
    norms: np.ndarray
    flags: np.ndarray

    def __post_init__(self):
        if not (len(self.grid) == len(self.norms) == len(self.flags)):
            raise ValueError("grid, norms and flags must have equal length")

    @property
    def band(self):
        return (float(self.grid[0]), float(self.grid[-1])) if len(self.grid) else (0.0, 0.0)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "resolvent_norm", "flag"])
            for om, nv, fl in zip(self.grid, self.norms, self.flags):
                w.writerow([repr(float(om)), repr(float(nv)), int(bool(fl))])

    @classmethod
    def from_csv(cls, path):
        rows = list(csv.DictReader(open(path, encoding="utf-8")))
        return cls(
            np.array([float(r["omega"]) for r in rows]),
            np.array([float(r["resolvent_norm"]) for r in rows]),
            np.array([bool(int(r["flag"])) for r in rows]),
        )

    @classmethod
    def from_function(cls, grid, func):
        grid = np.asarray(grid, dtype=float)
        norms = np.array([float(func(w)) for w in grid])
        return cls(grid, norms, ~np.isfinite(norms))


class _ResolventEvaluator:
    """``||R(i w, A)||`` for many ``w`` from one Schur factorization.

    Small matrices use a dense SVD per point.  Larger ones reduce ``A`` to
    triangular Schur form once and run Lanczos on ``(M^* M)^{-1}`` with
    ``M = i w - T``, so each point costs triangular solves only.  The two
    agree to the Lanczos tolerance; the dense path is the reference.
    """

    def __init__(self, A, method="auto"):
        A = np.asarray(A)
        self.n = A.shape[0]
        self.floor = sigma_min_floor(A)
        self.A = A
        if method == "auto":
            method = "dense" if self.n <= DENSE_LIMIT else "lanczos"
        self.method = method
        if method == "lanczos":
            self.T = scipy.linalg.schur(A.astype(complex), output="complex")[0]
            self._v0 = None

    def __call__(self, omega):
        if self.method == "dense":
            return resolvent_norm(self.A, omega, floor=self.floor)
        M = 1j * float(omega) * np.eye(self.n) - self.T
        if np.min(np.abs(np.diag(M))) <= self.floor:
            return float("inf")

        def mv(x):
            y = scipy.linalg.solve_triangular(M, x, lower=False, check_finite=False)
            return scipy.linalg.solve_triangular(M, y, lower=False, trans=2, check_finite=False)

        op = LinearOperator((self.n, self.n), matvec=mv, dtype=complex)
        try:
            val, vec = eigsh(op, k=1, which="LM", tol=1e-12, v0=self._v0, maxiter=5000)
        except ArpackNoConvergence:
            return resolvent_norm(self.A, omega, floor=self.floor)
        self._v0 = vec[:, 0]
        lam = float(val[0].real)
        if not np.isfinite(lam) or lam <= 0 or 1.0 / np.sqrt(lam) <= self.floor:
            return float("inf")
        return float(np.sqrt(lam))


def scan_resolvent(cl, omega_min, omega_max, samples=400, refine_near=(), cluster_width=None,
                   cluster_points=25, polish_peaks=True, method="auto", workers=1):
    """Resolvent norms on a log-spaced grid with refinement clusters.

    Parameters
    ----------
    cl : ClosedLoopSystem or square array
    omega_min, omega_max : float
        Band limits, ``0 < omega_min < omega_max``.
    samples : int
        Base grid size (log-spaced).
    refine_near : sequence of float
        Frequencies (typically controller modes) around which
        ``cluster_points`` extra points are placed within ``+-cluster_width``.
    polish_peaks : bool
        Locate each local maximum by a bounded scalar search between its
        neighbours and add the located point to the scan.
    workers : int
        Threads for the base grid when the dense evaluator is used.  The
        Lanczos path always runs serially because ARPACK is not reentrant.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    if not 0 < omega_min < omega_max:
        raise ValueError("need 0 < omega_min < omega_max")
    A = cl.A_e if isinstance(cl, ClosedLoopSystem) else np.asarray(cl)
    grid = [np.geomspace(omega_min, omega_max, samples)]
    centres = np.array(sorted(abs(float(w)) for w in refine_near if omega_min <= abs(w) <= omega_max))
    centres = np.unique(centres)
    if centres.size:
        if cluster_width is None:
            gaps = np.diff(centres)
            cluster_width = 0.25 * (np.min(gaps) if gaps.size else max(centres[0], 1.0))
        for c in centres:
            grid.append(np.linspace(c - cluster_width, c + cluster_width, cluster_points))
    grid = np.unique(np.concatenate(grid))
    grid = grid[(grid >= omega_min) & (grid <= omega_max)]
    ev = _ResolventEvaluator(A, method)
    if workers > 1 and ev.method == "dense":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            norms = np.array(list(pool.map(ev, grid)))
    else:
        norms = np.array([ev(w) for w in grid])
    if polish_peaks:
        extra_w, extra_n = [], []
        for i in _local_max_indices(norms):
            if i == 0 or i == len(grid) - 1:
                continue
            res = minimize_scalar(
                lambda w: -min(ev(w), 1e300),
                bounds=(grid[i - 1], grid[i + 1]),
                method="bounded",
                options={"xatol": 1e-10 * max(1.0, grid[i])},
            )
            if -res.fun > norms[i]:
                extra_w.append(float(res.x))
                extra_n.append(float(-res.fun))
        if extra_w:
            grid = np.concatenate([grid, extra_w])
            norms = np.concatenate([norms, extra_n])
            order = np.argsort(grid, kind="stable")
            grid, norms = grid[order], norms[order]
    flags = ~np.isfinite(norms)
    return ResolventScan(grid, norms, flags)


def _local_max_indices(norms):
    norms = np.asarray(norms, dtype=float)
    n = len(norms)
    out = []
    for i in range(n):
        if not np.isfinite(norms[i]):
            continue
        left = norms[i - 1] if i > 0 else -np.inf
        right = norms[i + 1] if i < n - 1 else -np.inf
        if i == 0 or i == n - 1:
            if (i == 0 and norms[i] > right) or (i == n - 1 and norms[i] > left):
                out.append(i)
            continue
        if norms[i] >= left and norms[i] >= right and (norms[i] > left or norms[i] > right):
            out.append(i)
    return out


@dataclass(frozen=True)
class GrowthFit:
    alpha: float
    intercept: float
    residual: float
    peak_omegas: np.ndarray
    peak_norms: np.ndarray


def envelope_points(scan, window=None):
    """Points used by :func:`fit_growth_exponent`.

    Interior local maxima when there are at least three.  A scan without
    interior maxima is monotone, so it is its own envelope; a constant scan
    is likewise used whole.
    """
    w = np.asarray(scan.grid, dtype=float)
    v = np.asarray(scan.norms, dtype=float)
    ok = ~np.asarray(scan.flags, dtype=bool) & np.isfinite(v) & (v > 0)
    if window is not None:
        ok &= (w >= window[0]) & (w <= window[1])
    w, v = w[ok], v[ok]
    if len(w) == 0:
        return w, v
    d = np.diff(v)
    scale = 1e-12 * np.max(np.abs(v))
    if np.all(np.abs(d) <= scale) or np.all(d >= -scale) or np.all(d <= scale):
        return w, v
    idx = [i for i in _local_max_indices(v) if 0 < i < len(v) - 1]
    return w[idx], v[idx]


def fit_growth_exponent(scan, window=None):
    """Least-squares slope of ``log ||R||`` against ``log w`` over peaks.

    Returns a :class:`GrowthFit`; ``residual`` is the RMS deviation in the
    natural log.
    """
    w, v = envelope_points(scan, window)
    if len(w) < 3:
        raise InsufficientPeaks(f"only {len(w)} envelope points in window {window}")
    x, y = np.log(w), np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return GrowthFit(float(slope), float(icpt), resid, w, v)


# ---------------------------------------------------------------------------
# M_log and decay models


@dataclass(frozen=True)
class MTable:
    """Positive increasing table of ``M(w)``, interpolated log-log."""

    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != v.shape or len(w) < 2:
            raise ValueError("table needs matching 1-D arrays with at least two points")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("table frequencies must be positive and increasing")
        if np.any(v <= 0) or np.any(np.diff(v) < 0):
            raise ValueError("table values must be positive and nondecreasing")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "values", v)

    def __call__(self, omega):
        if omega < self.omegas[0] * (1 - 1e-12) or omega > self.omegas[-1] * (1 + 1e-12):
            raise OutOfTable(f"omega={omega} outside [{self.omegas[0]}, {self.omegas[-1]}]")
        return float(np.exp(np.interp(np.log(omega), np.log(self.omegas), np.log(self.values))))

    @property
    def domain(self):
        return float(self.omegas[0]), float(self.omegas[-1])

    @classmethod
    def from_scan(cls, scan):
        """Increasing envelope (running maximum) of a resolvent scan."""
        ok = ~scan.flags & (scan.grid > 0)
        w = scan.grid[ok]
        v = np.maximum.accumulate(scan.norms[ok])
        return cls(w, v)


def _eval_M(M, omega):
    if isinstance(M, MTable):
        return M(omega)
    if callable(M):
        return float(M(omega))
    raise TypeError("M must be an MTable or a callable")


def m_log(M, omega):
    """``M(w) (log(1 + M(w)) + log(1 + w))``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    m = _eval_M(M, omega)
    if m <= 0:
        raise ValueError("M(omega) must be positive")
    return m * (np.log1p(m) + np.log1p(omega))


def m_log_inverse(M, t, rtol=1e-12):
    """Solve ``m_log(M, w) = t`` by bisection in ``log w``."""
    if isinstance(M, MTable):
        lo, hi = M.domain
    else:
        lo, hi = 1e-12, 1e12
    f_lo, f_hi = m_log(M, lo), m_log(M, hi)
    if not f_lo <= t <= f_hi:
        raise OutOfRange(f"t={t} outside [{f_lo}, {f_hi}]")
    a, b = np.log(lo), np.log(hi)
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if m_log(M, np.exp(mid)) < t:
            a = mid
        else:
            b = mid
    return float(np.exp(0.5 * (a + b)))


KINDS = ("Exponential", "Polynomial", "NonUniform")


@dataclass
class DecayModel:
    """A decay law for ``||T_e(t) x||`` or for the error integrals.

    ``Exponential``: ``M_e exp(-rate t)``; ``Polynomial``: ``M_e t^(-1/alpha)``;
    ``NonUniform``: ``M_e / M_log^{-1}(c t)``.
    """

    kind: str
    parameters: dict
    residual: float = float("nan")
    band: tuple = ()
    table: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if self.kind == "Polynomial" and not self.parameters.get("alpha", 0) > 0:
            raise ValueError("Polynomial decay needs alpha > 0")

    @property
    def alpha(self):
        return self.parameters.get("alpha")

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        Me = self.parameters.get("M_e", 1.0)
        if self.kind == "Exponential":
            return Me * np.exp(-self.parameters["rate"] * t)
        if self.kind == "Polynomial":
            return Me * t ** (-1.0 / self.parameters["alpha"])
        c = self.parameters.get("c", 1.0)
        return np.array([Me / m_log_inverse(self.table, c * s) for s in np.atleast_1d(t)])

    def to_json(self):
        return {
            "kind": self.kind,
            "parameters": {k: float(v) for k, v in self.parameters.items()},
            "fit_residual": None if not np.isfinite(self.residual) else float(self.residual),
            "band": [float(b) for b in self.band],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def predict_decay(source, abscissa=None, window=None, bounded_tol=0.1):
    """Decay model implied by a resolvent scan or by a growth exponent.

    * a number ``alpha`` gives ``Polynomial(alpha)``;
    * a scan with ``abscissa < 0`` whose envelope does not grow (fitted
      exponent below ``bounded_tol``) gives ``Exponential``;
    * a scan with a successful growth fit gives ``Polynomial``;
    * otherwise ``NonUniform`` with the scan's increasing envelope as table.
    """
    if np.ndim(source) == 0 and not isinstance(source, ResolventScan):
        alpha = float(source)
        return DecayModel("Polynomial", {"alpha": alpha, "M_e": 1.0})
    scan = source
    band = scan.band
    try:
        fit = fit_growth_exponent(scan, window)
    except InsufficientPeaks:
        fit = None
    if abscissa is not None and abscissa < 0 and (fit is None or fit.alpha < bounded_tol):
        sup = float(np.max(scan.norms[~scan.flags])) if np.any(~scan.flags) else float("nan")
        rate = -abscissa
        return DecayModel("Exponential", {"rate": rate, "M_e": 1.0, "sup_resolvent": sup},
                          residual=fit.residual if fit else float("nan"), band=band)
    if fit is not None and fit.alpha > 0:
        return DecayModel("Polynomial", {"alpha": fit.alpha, "M_e": 1.0}, fit.residual, band)
    table = MTable.from_scan(scan)
    return DecayModel("NonUniform", {"M_e": 1.0, "c": 1.0}, band=band, table=table)


def _fit_curves(t, v):
    """Log-linear and log-log least squares; returns both fits."""
    t = np.asarray(t, dtype=float)
    y = np.log(np.asarray(v, dtype=float))
    s_exp, c_exp = np.polyfit(t, y, 1)
    r_exp = float(np.sqrt(np.mean((y - (s_exp * t + c_exp)) ** 2)))
    x = np.log(t)
    s_pol, c_pol = np.polyfit(x, y, 1)
    r_pol = float(np.sqrt(np.mean((y - (s_pol * x + c_pol)) ** 2)))
    return (s_exp, c_exp, r_exp), (s_pol, c_pol, r_pol)


def fit_decay_curve(t, v, band=()):
    """Choose between ``M e^{-r t}`` and ``M t^{-1/alpha}`` by residual."""
    (s_exp, c_exp, r_exp), (s_pol, c_pol, r_pol) = _fit_curves(t, v)
    band = band or (float(np.min(t)), float(np.max(t)))
    if r_exp <= r_pol and s_exp < 0:
        return DecayModel("Exponential", {"rate": -s_exp, "M_e": float(np.exp(c_exp)),
                                          "alt_residual": r_pol}, r_exp, band)
    if s_pol < 0:
        return DecayModel("Polynomial", {"alpha": -1.0 / s_pol, "M_e": float(np.exp(c_pol)),
                                         "alt_residual": r_exp}, r_pol, band)
    return DecayModel("NonUniform", {"M_e": float(np.exp(c_pol)), "c": 1.0, "slope": s_pol},
                      r_pol, band)


def empirical_decay(cl, T, dt, x0=None, seed=0, fit_from=0.25):
    """Simulate ``x' = A_e x`` from a smooth state and fit its decay.

    ``x0`` defaults to ``A_e^{-1} y0`` for a random unit ``y0``.  The ratio
    ``||x(t)|| / ||A_e x0||`` is fitted over ``[fit_from T, T]``.
    """
    from passreg.regulation import propagate_homogeneous

    A = cl.A_e if isinstance(cl, ClosedLoopSystem) else np.asarray(cl)
    n = A.shape[0]
    if x0 is None:
        rng = np.random.default_rng(seed)
        y0 = rng.standard_normal(n) + (1j * rng.standard_normal(n) if np.iscomplexobj(A) else 0)
        y0 = y0 / np.linalg.norm(y0)
        x0 = numerics.solve_linear(A, y0)
    scale = np.linalg.norm(A @ x0)
    times, norms = propagate_homogeneous(A, x0, T, dt)
    ratio = norms / scale
    sel = (times >= fit_from * T) & (ratio > 0)
    model = fit_decay_curve(times[sel], ratio[sel])
    model.parameters["initial_ratio"] = float(ratio[0])
    return model, times, ratio


# ---------------------------------------------------------------------------
# hypothesis checkers


@dataclass
class HypothesisReport:
    """Named conditions with booleans plus diagnostic values."""

    conditions: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.conditions.values())

    def to_json(self):
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return float(v) if np.isfinite(v) else None
            if isinstance(v, (np.integer, int, bool, np.bool_)):
                return v if isinstance(v, bool) else int(v)
            if isinstance(v, np.ndarray):
                return [clean(x) for x in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {str(k): clean(x) for k, x in v.items()}
            if isinstance(v, complex):
                return [v.real, v.imag]
            return v

        return {"passed": bool(self.passed),
                "conditions": {k: bool(v) for k, v in self.conditions.items()},
                "details": clean(self.details)}


def stabilized_plant(plant, ctrl):
    """The plant with ``D_c2`` output feedback applied."""
    return output_feedback(plant, ctrl.D_c2)


def _feedthrough_only(ctrl):
    """Controller seen by the stabilized plant: feedthrough ``D_c1`` only."""
    return ctrl.replace(D_c2=np.zeros_like(ctrl.D_c2), D_c1=ctrl.D_c1)


def _re_min(P):
    return numerics.min_hermitian_eig(P)


def check_strong_hypotheses(plant_S, ctrl, grid, D0_samples=None, tol=1e-9, seed=0):
    """Conditions of the strong-stability theorem on the pre-stabilized plant.

    (1) ``re P_S(i w_k) > 0`` at every controller frequency;
    (2) ``I + P_S G`` invertible at grid points where ``re G`` is singular;
    (3) ``i w_k`` not an eigenvalue of ``A_c - B_c D0 (I + D_c1 D0)^{-1} C_c``
        for sampled ``D0`` with positive Hermitian part.

    ``G`` is the controller transfer with feedthrough ``D_c1``.
    """
    ctrl1 = _feedthrough_only(ctrl)
    p = ctrl.p
    freqs = np.array(ctrl.frequencies)
    re_vals = []
    for w in freqs:
        re_vals.append(_re_min(transfer(plant_S, 1j * w)))
    re_vals = np.array(re_vals)
    cond1 = bool(np.all(re_vals > tol))

    checked, worst = 0, np.inf
    for w in np.asarray(grid, dtype=float):
        if np.any(np.abs(freqs - w) <= 1e-9 * max(1.0, abs(w))):
            continue
        try:
            G = ctrl1.transfer(1j * w)
        except SpectrumHit:
            continue
        if numerics.min_hermitian_eig(G) > tol:
            continue
        checked += 1
        P = transfer(plant_S, 1j * w)
        worst = min(worst, numerics.min_singular_value(np.eye(p) + P @ G))
    cond2 = bool(checked == 0 or worst > tol)

    if D0_samples is None:
        rng = np.random.default_rng(seed)
        D0_samples = [s * np.eye(p) for s in (0.1, 1.0, 10.0)]
        for _ in range(3):
            X = rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))
            D0_samples.append(X @ X.conj().T / p + 0.1 * np.eye(p) + 0.5j * (X - X.conj().T))
    margins = []
    for D0 in D0_samples:
        K = D0 @ np.linalg.inv(np.eye(p) + ctrl1.D_c @ D0)
        Acl = ctrl.A_c - ctrl.B_c @ K @ ctrl.C_c
        m = np.inf
        for w in freqs:
            m = min(m, numerics.min_singular_value(1j * w * np.eye(ctrl.n_c) - Acl))
        margins.append(m)
    cond3 = bool(np.all(np.array(margins) > tol))
    return HypothesisReport(
        {"re_P_positive_at_modes": cond1, "IPG_invertible_where_reG_singular": cond2,
         "modes_leave_spectrum_under_feedback": cond3},
        {"re_P_at_modes": re_vals, "condition2_points": checked,
         "condition2_min_singular": worst if checked else None, "condition3_margins": margins},
    )


def omega_eps_mask(grid, freqs, eps):
    grid = np.asarray(grid, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        return np.zeros(grid.shape, dtype=bool)
    return np.min(np.abs(grid[:, None] - freqs[None, :]), axis=1) < eps


def check_exponential_hypotheses(plant_S, ctrl, grid, omega_set, gamma, delta, gamma0,
                                 mus=(0.25, 0.5, 0.75), tol=1e-9):
    """Conditions of the exponential-stability theorem.

    Parameters
    ----------
    grid : frequencies at which the frequency-wise conditions are sampled.
    omega_set : callable ``w -> bool`` giving membership of ``Omega``, or a
        pair ``(freqs, eps)`` for the union of ``eps``-balls around ``freqs``,
        or ``"all"`` for ``Omega = R``.
    gamma : float, the lower bound of ``re P_S`` on ``Omega``.
    delta, gamma0 : constants of condition (2).
    """
    if omega_set == "all":
        def in_omega(w):
            return True
    elif callable(omega_set):
        in_omega = omega_set
    else:
        f, eps = omega_set
        f = np.asarray(f, dtype=float)

        def in_omega(w):
            return bool(np.any(np.abs(f - w) < eps))

    ctrl1 = _feedthrough_only(ctrl)
    abscissa_S = spectral_abscissa(plant_S.A)
    grid = np.asarray(grid, dtype=float)

    on_axis = [w for w in ctrl.frequencies]
    ev = numerics.spectrum(ctrl.A_c)
    axis_ev = ev[np.abs(ev.real) <= 1e-9 * max(1.0, np.max(np.abs(ev), initial=1.0))]
    cond_spec = all(in_omega(float(e.imag)) for e in axis_ev)

    re_on_omega = [(_re_min(transfer(plant_S, 1j * w))) for w in grid if in_omega(w)]
    cond_gamma = bool(not re_on_omega or min(re_on_omega) >= gamma - tol)

    sup_R, bad_points, worst_gp = 0.0, [], 0.0
    outside = [w for w in grid if not in_omega(w)]
    for w in outside:
        try:
            Rc = numerics.solve_linear(1j * w * np.eye(ctrl.n_c) - ctrl.A_c, np.eye(ctrl.n_c))
        except numerics.SingularMatrix:
            sup_R = np.inf
            continue
        sup_R = max(sup_R, np.linalg.norm(Rc, 2))
        P = transfer(plant_S, 1j * w)
        G = ctrl1.C_c @ Rc @ ctrl1.B_c + ctrl1.D_c
        gp = np.linalg.norm(G @ P, 2)
        worst_gp = max(worst_gp, gp)
        g_w = max(_re_min(P), 0.0)
        d_w = max(numerics.min_hermitian_eig(G), 0.0)
        if not (gp <= delta < 1 or g_w + d_w >= gamma0):
            bad_points.append(float(w))
    cond1 = bool(cond_spec and np.isfinite(sup_R))
    cond2 = bool(not bad_points and 0 < delta < 1 and gamma0 > 0)

    abscissae = []
    for mu in mus:
        K = mu * plant_S.D
        fed = output_feedback(ctrl1.as_system().replace(D=ctrl1.D_c), K)
        abscissae.append(spectral_abscissa(fed.A))
    cond3 = bool(np.all(np.array(abscissae) < 0))
    return HypothesisReport(
        {"plant_exponentially_stable": abscissa_S < 0, "re_P_bounded_below_on_Omega": cond_gamma,
         "controller_spectrum_in_Omega": cond1, "frequency_condition_outside_Omega": cond2,
         "controller_stabilized_by_feedthrough": cond3},
        {"plant_abscissa": abscissa_S, "min_re_P_on_Omega": min(re_on_omega) if re_on_omega else None,
         "sup_controller_resolvent_outside": sup_R, "max_GP_outside": worst_gp,
         "violating_frequencies": bad_points[:20], "violations": len(bad_points),
         "controller_feedback_abscissae": abscissae, "axis_modes": len(on_axis)},
    )


def gap_is_uniform(freqs, ratio=0.5):
    """Uniform-gap test for the sequence condition with ``h = 1``.

    The set counts as uniformly gapped when the minimal gap among the upper
    half of the (sorted, absolute) frequencies is at least ``ratio`` times
    the minimal gap among the lower half; a shrinking gap signals frequencies
    that accumulate.
    """
    f = np.unique(np.abs(np.asarray(freqs, dtype=float)))
    if f.size < 4:
        return True
    gaps = np.diff(f)
    half = len(gaps) // 2
    return bool(np.min(gaps[half:]) >= ratio * np.min(gaps[:half]))


def diagonal_example_laws(c, eps, gamma_scale=0.05):
    """Built-in ``gamma``, ``g`` for the diagonal heat-loop controller."""

    def gamma(w):
        return gamma_scale * (1.0 + abs(w)) ** -0.5

    def g(w):
        return (1.0 + abs(w)) ** (1 + 2 * eps) / c**2

    return gamma, g


def check_nonuniform_hypotheses(plant_S, ctrl, eps, gamma, g, h=None, samples_per_mode=9,
                                M0=1.0, tol=1e-12):
    """Conditions of the non-uniform stability theorem for a diagonal controller.

    ``gamma``, ``g`` and ``h`` are callables of ``|w|`` (``h`` may be
    omitted when the mode frequencies are uniformly gapped, in which case
    ``h = 1``).  Returns the report and the predicted table
    ``M(w) = M0 g(w) h(w) / gamma(w)`` at the positive mode frequencies.
    """
    freqs = np.array(ctrl.frequencies)
    pinv_sq = []
    for w in freqs:
        Ck, _ = mode_gain(ctrl, w)
        pinv_sq.append(numerics.pseudoinverse_norm(Ck, cutoff=1e-14) ** 2)
    pinv_sq = np.array(pinv_sq)
    g_vals = np.array([g(abs(w)) for w in freqs])
    cond_g = bool(np.all(pinv_sq <= g_vals * (1 + 1e-12)))

    uniform = gap_is_uniform(freqs)
    if h is None:
        cond_h = uniform
        h_fun = (lambda w: 1.0) if uniform else None
    else:
        cond_h = True
        h_fun = h

    offsets = np.linspace(-eps, eps, samples_per_mode + 2)[1:-1]
    ratios = []
    for w in freqs:
        for off in offsets:
            s = w + off
            re = _re_min(transfer(plant_S, 1j * s))
            ratios.append((s, re, gamma(abs(s))))
    margin = min(re - gm for _, re, gm in ratios) if ratios else np.inf
    cond_gamma = bool(margin >= -tol)

    table = None
    if h_fun is not None:
        pos = np.unique(np.abs(freqs[freqs != 0]))
        if pos.size >= 2:
            vals = np.array([M0 * g(w) * h_fun(w) / gamma(w) for w in pos])
            table = MTable(pos, np.maximum.accumulate(vals))
    report = HypothesisReport(
        {"gain_pseudoinverse_bounded_by_g": cond_g, "gap_condition": cond_h,
         "re_P_above_gamma_near_modes": cond_gamma},
        {"pinv_norm_sq": pinv_sq, "g_at_modes": g_vals, "uniform_gap": uniform,
         "min_re_P_minus_gamma": margin, "g_at_least_one": bool(np.all(g_vals >= 1))},
    )
    return report, table


def feedback_controller_operator(ctrl):
    """``A_c - B_c (I + D_c)^{-1} C_c``, the controller closed with ``P = I``."""
    p = ctrl.p
    return ctrl.A_c - ctrl.B_c @ np.linalg.solve(np.eye(p) + ctrl.D_c, ctrl.C_c)


@dataclass(frozen=True)
class FeedbackDecayReport:
    abscissa: float
    scan: ResolventScan
    fit: object


def check_feedback_decay(ctrl, omega_min=None, omega_max=None, samples=400, window=None):
    """Spectral abscissa, resolvent scan and growth fit of the closed controller."""
    if ctrl.recipe not in ("Diagonal", "FinDim", "FinDimReal"):
        raise ValueError("check_feedback_decay expects a Diagonal or FinDim controller")
    Acl = feedback_controller_operator(ctrl)
    freqs = np.abs(np.array(ctrl.frequencies))
    pos = freqs[freqs > 0]
    lo = omega_min if omega_min is not None else (0.5 * pos.min() if pos.size else 0.1)
    hi = omega_max if omega_max is not None else (1.05 * pos.max() if pos.size else 10.0)
    scan = scan_resolvent(Acl, lo, hi, samples, refine_near=pos)
    try:
        fit = fit_growth_exponent(scan, window)
    except InsufficientPeaks:
        fit = None
    return FeedbackDecayReport(spectral_abscissa(Acl), scan, fit)


@dataclass(frozen=True)
class NecessityReport:
    omegas: np.ndarray
    inverse_norms: np.ndarray
    monotone: bool
    growth_exponent: float
    sup: float
    exponential_impossible: bool

    def to_json(self):
        return {
            "omegas": self.omegas.tolist(),
            "inverse_norms": self.inverse_norms.tolist(),
            "monotone": self.monotone,
            "growth_exponent": self.growth_exponent,
            "sup": self.sup,
            "exponential_impossible": self.exponential_impossible,
        }


def check_exp_necessity(plant_S, freqs, D_c2=None, growth_tol=0.2):
    """Table of ``||P_S(i w_k)^{-1}||`` over the given frequencies.

    The growth exponent is the log-log slope of ``||P_S^{-1} - D_c2||``,
    which equals ``||P^{-1}||`` of the unstabilized plant; subtracting the
    constant removes the plateau ``D_c2`` that would otherwise mask growth
    on a finite band.  The verdict "exponential closed loop impossible" is
    issued when the table increases monotonically and that exponent exceeds
    ``growth_tol``.
    """
    freqs = np.asarray(freqs, dtype=float)
    norms, core = [], []
    p = plant_S.p
    D2 = np.zeros((p, p)) if D_c2 is None else np.asarray(D_c2).reshape(p, p)
    for w in freqs:
        P = transfer(plant_S, 1j * w)
        try:
            Pinv = numerics.solve_linear(P, np.eye(p))
        except numerics.SingularMatrix as exc:
            raise SpectrumHit(f"P_S(i{w}) is singular") from exc
        norms.append(np.linalg.norm(Pinv, 2))
        core.append(np.linalg.norm(Pinv - D2, 2))
    norms, core = np.array(norms), np.array(core)
    monotone = bool(np.all(np.diff(norms) > 0)) if len(norms) > 1 else False
    pos = (freqs > 0) & (core > 0)
    if np.count_nonzero(pos) >= 2:
        slope = float(np.polyfit(np.log(freqs[pos]), np.log(core[pos]), 1)[0])
    else:
        slope = 0.0
    return NecessityReport(freqs, norms, monotone, slope, float(np.max(norms)) if len(norms) else 0.0,
                           bool(monotone and slope > growth_tol))
