"""State-space systems, transfer functions and passivity tools.

All systems here are finite-dimensional with the state inner product already
normalized to the Euclidean one, so adjoints are conjugate transposes.
"""

from dataclasses import dataclass, field

import numpy as np

from passreg import numerics
from passreg.numerics import SingularMatrix, as_matrix

DEFAULT_TOL = 1e-9


class SpectrumHit(Exception):
    """The evaluation point lies (numerically) in the spectrum."""


class FeedbackNotAdmissible(Exception):
    """``I + D K`` is numerically singular."""


class InnerSingular(Exception):
    """The inner factor of the Woodbury formula is numerically singular."""


class PreconditionViolated(Exception):
    """A caller-asserted operator inequality does not hold."""


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """``x' = A x + B u + B_d w``, ``y = C x + D u`` with ``dim y = dim u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Bd: np.ndarray = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        if C.shape[1] != n and C.shape[0] == n and C.shape[1] == B.shape[1]:
            C = C.reshape(B.shape[1], n)
        D = as_matrix(self.D, "D")
        if B.shape[0] != n or C.shape[1] != n:
            raise ValueError(f"B {B.shape} / C {C.shape} incompatible with n={n}")
        m, p = B.shape[1], C.shape[0]
        if m != p:
            raise ValueError(f"input dim {m} != output dim {p}; coupling needs Y = U")
        if D.shape != (p, m):
            raise ValueError(f"D must be {(p, m)}, got {D.shape}")
        if self.Bd is None:
            Bd = np.zeros((n, 0))
        else:
            Bd = as_matrix(self.Bd, "Bd")
            if Bd.size == 0:
                Bd = np.zeros((n, 0))
            if Bd.shape[0] != n:
                raise ValueError(f"Bd has {Bd.shape[0]} rows, expected {n}")
        for name, val in (("A", A), ("B", B), ("C", C), ("D", D), ("Bd", Bd)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def m_d(self):
        return self.Bd.shape[1]

    @property
    def is_real(self):
        return not any(np.iscomplexobj(M) for M in (self.A, self.B, self.C, self.D, self.Bd))

    def replace(self, **changes):
        kw = dict(A=self.A, B=self.B, C=self.C, D=self.D, Bd=self.Bd,
                  label=self.label, meta=dict(self.meta))
        kw.update(changes)
        return StateSpaceSystem(**kw)

    def to_json(self):
        return {
            "n": self.n,
            "m": self.m,
            "m_d": self.m_d,
            "p": self.p,
            "label": self.label,
            "A": encode_matrix(self.A),
            "B": encode_matrix(self.B),
            "Bd": encode_matrix(self.Bd),
            "C": encode_matrix(self.C),
            "D": encode_matrix(self.D),
        }

    @classmethod
    def from_json(cls, obj):
        n, m, m_d, p = (int(obj[k]) for k in ("n", "m", "m_d", "p"))
        Bd = decode_matrix(obj.get("Bd", []), n, m_d)
        sys = cls(
            A=decode_matrix(obj["A"], n, n),
            B=decode_matrix(obj["B"], n, m),
            C=decode_matrix(obj["C"], p, n),
            D=decode_matrix(obj["D"], p, m),
            Bd=Bd if m_d else None,
            label=obj.get("label", ""),
        )
        return sys


def encode_matrix(M):
    """Nested list of ``[re, im]`` pairs, row-major."""
    M = np.asarray(M)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def decode_matrix(rows, n_rows, n_cols):
    if n_rows == 0 or n_cols == 0:
        return np.zeros((n_rows, n_cols))
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (n_rows, n_cols, 2):
        raise ValueError(f"expected {(n_rows, n_cols, 2)} pairs, got {arr.shape}")
    M = arr[..., 0] + 1j * arr[..., 1]
    if not np.any(arr[..., 1]):
        M = M.real
    return M


def resolvent_apply(A, lam, rhs):
    """``(lam I - A)^{-1} rhs``; raises :class:`SpectrumHit` on a singular pivot."""
    n = A.shape[0]
    try:
        return numerics.solve_linear(lam * np.eye(n) - A, rhs)
    except SingularMatrix as exc:
        raise SpectrumHit(f"lambda={lam} is in the spectrum: {exc}") from exc


def transfer(sys, lam):
    """``P(lam) = C (lam - A)^{-1} B + D``."""
    return sys.C @ resolvent_apply(sys.A, lam, sys.B) + sys.D


def disturbance_transfer(sys, lam):
    """``P_d(lam) = C (lam - A)^{-1} B_d``."""
    if sys.m_d == 0:
        return np.zeros((sys.p, 0))
    return sys.C @ resolvent_apply(sys.A, lam, sys.Bd)


@dataclass(frozen=True)
class PassivityReport:
    is_passive: bool
    max_eig_dissipation_block: float
    re_D_min: float


def dissipation_block(sys):
    """Hermitian form whose negativity is equivalent to impedance passivity.

    ``re<Ax + Bu, x> - re<Cx + Du, u> = [x; u]* M [x; u]``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    top = np.hstack([numerics.hermitian_part(A), 0.5 * (B - C.conj().T)])
    bottom = np.hstack([0.5 * (B.conj().T - C), -numerics.hermitian_part(D)])
    return np.vstack([top, bottom])


def check_passive(sys, tol=DEFAULT_TOL):
    M = dissipation_block(sys)
    lam_max = float(np.linalg.eigvalsh(M)[-1])
    re_d = numerics.min_hermitian_eig(sys.D) if sys.p else 0.0
    return PassivityReport(
        is_passive=bool(lam_max <= tol and re_d >= -tol),
        max_eig_dissipation_block=lam_max,
        re_D_min=re_d,
    )


def output_feedback(sys, K):
    """Close the loop ``u = -K y + v``.

    Returns ``(A - B K Q1 C, B Q2, Q1 C, Q1 D)`` with ``Q1 = (I + D K)^{-1}``
    and ``Q2 = (I + K D)^{-1}``; the disturbance input is unchanged.
    """
    K = as_matrix(K, "K")
    p = sys.p
    if K.shape != (p, p):
        raise ValueError(f"K must be {(p, p)}, got {K.shape}")
    eye = np.eye(p)
    try:
        Q1 = numerics.solve_linear(eye + sys.D @ K, eye)
        Q2 = numerics.solve_linear(eye + K @ sys.D, eye)
    except SingularMatrix as exc:
        raise FeedbackNotAdmissible(str(exc)) from exc
    return StateSpaceSystem(
        A=sys.A - sys.B @ K @ Q1 @ sys.C,
        B=sys.B @ Q2,
        C=Q1 @ sys.C,
        D=Q1 @ sys.D,
        Bd=sys.Bd if sys.m_d else None,
        label=f"{sys.label}+feedback" if sys.label else "feedback",
        meta=dict(sys.meta),
    )


def resolvent_woodbury(sys, Q, lam):
    """``R(lam, A - B Q C)`` via the Woodbury formula.

    ``R - R B (Q^{-1} + C R B)^{-1} C R`` with ``R = R(lam, A)``.  ``sys``
    may be a :class:`StateSpaceSystem` or an ``(A, B, C)`` triple.
    """
    if isinstance(sys, StateSpaceSystem):
        A, B, C = sys.A, sys.B, sys.C
    else:
        A, B, C = (np.asarray(M) for M in sys)
    A, B, C, Q = (np.asarray(M) for M in (A, B, C, Q))
    if Q.ndim < 2:
        Q = Q.reshape(1, 1)
    n = A.shape[0]
    R = resolvent_apply(A, lam, np.eye(n))
    if B.size == 0 or C.size == 0:
        return R
    q = Q.shape[0]
    try:
        Qinv = numerics.solve_linear(Q, np.eye(q))
        inner = Qinv + C @ R @ B
        correction = numerics.solve_linear(inner, C @ R)
    except SingularMatrix as exc:
        raise InnerSingular(str(exc)) from exc
    return R - R @ B @ correction


@dataclass(frozen=True)
class OperatorLemmaReport:
    """Outcome of the four operator inequalities; vacuous items count as held."""

    a: bool
    b: bool
    c: bool
    d: bool

    @property
    def all_hold(self):
        return self.a and self.b and self.c and self.d


def verify_operator_lemmas(T, S, c, d, slack=DEFAULT_TOL):
    """Check the resolvent-type inequalities for ``re T >= c``, ``re S >= d``.

    (a) ``re T^{-1} >= c ||T||^{-2}``, and ``||T^{-1}|| <= 1/c`` when ``c > 0``.
    (b) ``||T (I+ST)^{-1}|| <= ||T||^2 / (c + d ||T||^2)`` when ``c > 0`` or
        ``d > 0``; for ``c > 0`` also the lower bound on its real part.
    (c) ``re T (I+ST)^{-1} >= d (||T^{-1}|| + ||S||)^{-2}`` when ``d > 0``.
    (d) for Hermitian ``S >= 0``: ``I + ST``, ``I + TS`` invertible and
        ``re T (I+ST)^{-1} >= 0``.
    """
    T = as_matrix(T, "T")
    S = as_matrix(S, "S")
    k = T.shape[0]
    eye = np.eye(k)
    if numerics.min_hermitian_eig(T) < c - slack or numerics.min_hermitian_eig(S) < d - slack:
        raise PreconditionViolated("re T >= c or re S >= d does not hold")

    def tol(scale):
        return slack * max(1.0, scale)

    nT = np.linalg.norm(T, 2)
    nS = np.linalg.norm(S, 2)
    try:
        Tinv = numerics.solve_linear(T, eye)
    except SingularMatrix:
        Tinv = None
    try:
        F = T @ numerics.solve_linear(eye + S @ T, eye)
    except SingularMatrix:
        F = None

    ok_a = True
    if Tinv is not None:
        lower = c / nT**2
        ok_a = numerics.min_hermitian_eig(Tinv) >= lower - tol(np.linalg.norm(Tinv, 2))
        if c > 0:
            ok_a = ok_a and np.linalg.norm(Tinv, 2) <= 1.0 / c + tol(1.0 / c)
    elif c > 0:
        ok_a = False

    ok_b = True
    if c > 0 or d > 0:
        if F is None:
            ok_b = False
        else:
            bound = nT**2 / (c + d * nT**2)
            ok_b = np.linalg.norm(F, 2) <= bound + tol(bound)
            if c > 0:
                re_bound = (c**3 + c**2 * d * nT**2) / (nT**2 * (1 + c * nS) ** 2)
                ok_b = ok_b and numerics.min_hermitian_eig(F) >= re_bound - tol(re_bound)

    ok_c = True
    if Tinv is not None and d > 0:
        if F is None:
            ok_c = False
        else:
            bound = d / (np.linalg.norm(Tinv, 2) + nS) ** 2
            ok_c = numerics.min_hermitian_eig(F) >= bound - tol(bound)

    ok_d = True
    s_herm = np.allclose(S, S.conj().T, atol=tol(nS))
    if s_herm and np.linalg.eigvalsh(numerics.hermitian_part(S))[0] >= -slack:
        try:
            numerics.solve_linear(eye + T @ S, eye)
            ok_d = F is not None and numerics.min_hermitian_eig(F) >= -tol(np.linalg.norm(F, 2))
        except SingularMatrix:
            ok_d = False
    return OperatorLemmaReport(bool(ok_a), bool(ok_b), bool(ok_c), bool(ok_d))


@dataclass(frozen=True)
class IdpReport:
    all_invertible: bool
    sup_inverse_norm: float
    failures: tuple


def check_idp_invertibility(P_values, D_c, tol=DEFAULT_TOL):
    """Invertibility of ``I + D_c P`` over samples with ``re P >= 0``."""
    D_c = as_matrix(D_c, "D_c")
    if numerics.min_hermitian_eig(D_c) < -tol:
        raise PreconditionViolated("D_c is not positive semidefinite")
    sup = 0.0
    failures = []
    for idx, P in enumerate(P_values):
        P = as_matrix(P, "P")
        if numerics.min_hermitian_eig(P) < -tol * max(1.0, np.linalg.norm(P, 2)):
            raise PreconditionViolated(f"sample {idx}: re P is not positive semidefinite")
        M = np.eye(P.shape[0]) + D_c @ P
        smin = numerics.min_singular_value(M)
        if smin <= tol:
            failures.append(idx)
            continue
        sup = max(sup, 1.0 / smin)
    return IdpReport(not failures, sup, tuple(failures))
