"""Power-preserving interconnection of a passive plant and a passive controller.

The wiring is ``u = y_c`` and ``u_c = y_ref - y``.  With
``Q1 = (I + D D_c)^{-1}`` and ``Q2 = (I + D_c D)^{-1}`` the closed loop reads

    x_e' = A_e x_e + B_e w_ext,    e = C_e x_e + D_e w_ext,

where ``w_ext = (w_dist, y_ref)`` and ``e = y_ref - y``.
"""

from dataclasses import dataclass, field

import numpy as np

from passreg import numerics
from passreg.lti import (
    SpectrumHit,
    encode_matrix,
    output_feedback,
    resolvent_apply,
    transfer,
)
from passreg.numerics import SingularMatrix


class FeedthroughLoopSingular(Exception):
    """``I + D D_c`` is numerically singular, so the loop is ill-posed."""


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    A_e: np.ndarray
    B_e: np.ndarray
    C_e: np.ndarray
    D_e: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    plant: object
    ctrl: object
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.plant.n

    @property
    def n_c(self):
        return self.ctrl.n_c

    @property
    def dim(self):
        return self.A_e.shape[0]

    @property
    def m_d(self):
        return self.plant.m_d

    @property
    def p(self):
        return self.plant.p

    def split(self, x_e):
        """Plant and controller parts of a closed-loop state."""
        x_e = np.asarray(x_e)
        return x_e[: self.n], x_e[self.n :]

    def stack(self, x, z):
        return np.concatenate([np.asarray(x, dtype=complex).ravel(), np.asarray(z, dtype=complex).ravel()])

    def w_ext(self, w_dist, y_ref):
        return np.concatenate([np.asarray(w_dist).ravel(), np.asarray(y_ref).ravel()])

    def to_json(self):
        return {
            "n_e": self.dim,
            "n": self.n,
            "n_c": self.n_c,
            "m_d": self.m_d,
            "p": self.p,
            "A_e": encode_matrix(self.A_e),
            "B_e": encode_matrix(self.B_e),
            "C_e": encode_matrix(self.C_e),
            "D_e": encode_matrix(self.D_e),
        }


def assemble(plant, ctrl):
    """Build ``(A_e, B_e, C_e, D_e)``; ``D_c = D_c1 + D_c2`` enters as a sum."""
    if plant.p != ctrl.p:
        raise ValueError(f"plant output dim {plant.p} != controller dim {ctrl.p}")
    A, B, C, D, Bd = plant.A, plant.B, plant.C, plant.D, plant.Bd
    A_c, B_c, C_c, D_c = ctrl.A_c, ctrl.B_c, ctrl.C_c, ctrl.D_c
    p = plant.p
    eye = np.eye(p)
    try:
        Q1 = numerics.solve_linear(eye + D @ D_c, eye)
        Q2 = numerics.solve_linear(eye + D_c @ D, eye)
    except SingularMatrix as exc:
        raise FeedthroughLoopSingular(str(exc)) from exc
    n, n_c, m_d = plant.n, ctrl.n_c, plant.m_d
    A_e = np.block(
        [
            [A - B @ D_c @ Q1 @ C, B @ Q2 @ C_c],
            [-B_c @ Q1 @ C, A_c - B_c @ Q1 @ D @ C_c],
        ]
    )
    B_e = np.block(
        [
            [Bd, B @ D_c @ Q1],
            [np.zeros((n_c, m_d)), B_c @ Q1],
        ]
    )
    C_e = np.hstack([-Q1 @ C, -Q1 @ D @ C_c])
    D_e = np.hstack([np.zeros((p, m_d)), Q1])
    if np.isrealobj(A_e) and np.isrealobj(B_e) and np.isrealobj(C_e):
        A_e, B_e, C_e, D_e = (np.asarray(M, dtype=float) for M in (A_e, B_e, C_e, D_e))
    for M in (A_e, B_e, C_e, D_e, Q1, Q2):
        M.setflags(write=False)
    assert A_e.shape == (n + n_c, n + n_c)
    return ClosedLoopSystem(A_e, B_e, C_e, D_e, Q1, Q2, plant, ctrl)


def check_contraction(cl, tol=1e-10):
    """Largest eigenvalue of ``(A_e + A_e^*)/2``; contraction iff ``<= tol``."""
    A_e = cl.A_e if isinstance(cl, ClosedLoopSystem) else np.asarray(cl)
    if A_e.shape[0] == 0:
        return 0.0
    return numerics.max_hermitian_eig(A_e)


@dataclass(frozen=True)
class SchurResult:
    S: np.ndarray
    inverse_direct: np.ndarray
    inverse_woodbury: object  # ndarray, or None when i*omega is a controller eigenvalue


def closed_plant_transfer(plant, D_c, lam):
    """``P(lam)(I + D_c P(lam))^{-1}`` via the ``D_c``-fed-back plant.

    Works whenever ``lam`` avoids the spectrum of ``A - B D_c Q1 C`` even if it
    hits the spectrum of ``A``.
    """
    return transfer(output_feedback(plant, D_c), lam)


def schur_complement(plant, ctrl, omega):
    """``S_A(i w) = i w - A_c + B_c P (I + D_c P)^{-1} C_c`` and its inverse.

    The inverse is returned twice: by direct LU of ``S_A`` and by the
    Woodbury form ``R_c [I - B_c P (I + G P)^{-1} C_c R_c]`` with
    ``R_c = R(i w, A_c)``, ``G = C_c R_c B_c + D_c``.  The latter is
    ``None`` when ``i w`` is an eigenvalue of ``A_c``.
    """
    lam = 1j * float(omega)
    n_c = ctrl.n_c
    Pcl = closed_plant_transfer(plant, ctrl.D_c, lam)
    S = lam * np.eye(n_c) - ctrl.A_c + ctrl.B_c @ Pcl @ ctrl.C_c
    try:
        S_inv = numerics.solve_linear(S, np.eye(n_c))
    except SingularMatrix as exc:
        raise SpectrumHit(f"S_A(i{omega}) is singular: {exc}") from exc
    try:
        Rc = resolvent_apply(ctrl.A_c, lam, np.eye(n_c))
    except SpectrumHit:
        return SchurResult(S, S_inv, None)
    P = transfer(plant, lam)
    G = ctrl.C_c @ Rc @ ctrl.B_c + ctrl.D_c
    p = plant.p
    try:
        inner = numerics.solve_linear(np.eye(p) + G @ P, ctrl.C_c @ Rc)
    except SingularMatrix as exc:
        raise SpectrumHit(f"I + G P singular at i{omega}: {exc}") from exc
    S_inv_w = Rc @ (np.eye(n_c) - ctrl.B_c @ P @ inner)
    return SchurResult(S, S_inv, S_inv_w)


def block_resolvent(plant, ctrl, omega):
    """``R(i w, A_e)`` assembled from ``R(i w, A^cl)`` and ``S_A(i w)^{-1}``.

    ``A^cl = A - B D_c Q1 C`` is the plant with ``D_c`` output feedback.
    """
    lam = 1j * float(omega)
    fed = output_feedback(plant, ctrl.D_c)
    R = resolvent_apply(fed.A, lam, np.eye(plant.n))
    S_inv = schur_complement(plant, ctrl, omega).inverse_direct
    top_in = fed.B @ ctrl.C_c  # B Q2 C_c
    left_out = ctrl.B_c @ fed.C  # B_c Q1 C
    RB = R @ top_in
    CR = left_out @ R
    return np.block(
        [
            [R - RB @ S_inv @ CR, RB @ S_inv],
            [-S_inv @ CR, S_inv],
        ]
    )


def sigma_min_floor(cl):
    A_e = cl.A_e if isinstance(cl, ClosedLoopSystem) else np.asarray(cl)
    return 1e-12 * max(np.linalg.norm(A_e, 2), 1.0)


def resolvent_norm(cl, omega, floor=None):
    """``||R(i w, A_e)|| = 1 / sigma_min(i w - A_e)``; ``inf`` flags a hit.

    ``floor`` defaults to ``1e-12 ||A_e||``; pass it explicitly when scanning
    many frequencies to avoid recomputing the norm.
    """
    A_e = cl.A_e if isinstance(cl, ClosedLoopSystem) else np.asarray(cl)
    if floor is None:
        floor = sigma_min_floor(A_e)
    s = numerics.min_singular_value(1j * float(omega) * np.eye(A_e.shape[0]) - A_e)
    if s <= floor:
        return float("inf")
    return 1.0 / s
