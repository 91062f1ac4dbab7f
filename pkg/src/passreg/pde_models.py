"""Passivity-preserving discretizations of three boundary/distributed PDE plants.

Each builder returns a :class:`~passreg.lti.StateSpaceSystem` whose state
coordinates are scaled so that the discrete energy is the Euclidean norm.
The passivity inequality then holds exactly for the matrices, not only in
the limit.

* ``wave-boundary``: ``w_tt = w_xx`` on (0, 1), ``u = -w_x(0)``,
  ``w_x(1) = 0``, ``y = w_t(0)``.  Transfer function ``coth(lam)``.
* ``wave-distributed``: ``w_tt = w_xx + b u`` with ``b = 2(1 - x)``,
  Dirichlet ends, ``y = int b w_t``.
* ``heat-2d``: ``x_t = Laplace x`` on the unit square, flux ``u`` on the
  left edge, flux ``w_dist`` on the right half of the top edge, no flux
  elsewhere, ``y`` = integral over the left edge.  Transfer function
  ``coth(sqrt lam) / sqrt lam``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from passreg.controllers import (
    SignalSpec,
    build_diagonal,
    build_fin_dim_real,
    build_transport,
)
from passreg.lti import StateSpaceSystem

MODELS = ("wave-boundary", "wave-distributed", "heat-2d")


class PoleHit(ValueError):
    """The closed-form transfer function has a pole at the requested point."""


@dataclass(frozen=True)
class DiscretizationSpec:
    model: str
    N: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.N < 4:
            raise ValueError("N must be at least 4")

    def build(self):
        return BUILDERS[self.model](self.N, **self.params)


def build_wave_boundary(N=200):
    """Boundary-controlled wave equation in Riemann-invariant form.

    With ``r = (w_t - w_x)/sqrt 2`` and ``l = (w_t + w_x)/sqrt 2`` the wave
    splits into two transport equations that the reflecting end ``x = 1``
    joins into a single loop of length 2.  Unfolding it gives
    ``q_t + q_eta = 0`` on ``eta in (0, 2)`` with inflow
    ``q(0) = q(2) + sqrt 2 u`` and output ``y = sqrt 2 q(2) + u``, hence
    ``D = 1``.  The loop is discretized with ``2N`` first-order upwind cells,
    which keeps the discrete energy balance exact.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    M = 2 * N
    h = 2.0 / M
    A = (-np.eye(M) + np.eye(M, k=-1)) / h
    A[0, M - 1] = 1.0 / h
    B = np.zeros((M, 1))
    B[0, 0] = np.sqrt(2.0 / h)
    C = np.zeros((1, M))
    C[0, M - 1] = np.sqrt(2.0 / h)
    return StateSpaceSystem(A, B, C, np.ones((1, 1)), label="wave-boundary",
                            meta={"N": N, "cells": M, "h": h})


def _fem_matrices(N):
    h = 1.0 / (N + 1)
    nodes = h * np.arange(1, N + 1)
    K = (2 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)) / h
    Mm = h * (4 * np.eye(N) + np.eye(N, k=1) + np.eye(N, k=-1)) / 6
    return h, nodes, K, Mm


def build_wave_distributed(N=24):
    """Piecewise-linear FEM for ``w_tt = w_xx + b u`` with Dirichlet ends.

    With mass ``M = L L^T`` and stiffness ``K = G G^T`` the state is
    ``(G^T w, L^T w_t)``; this turns the energy into the Euclidean norm and
    gives a skew ``A`` and ``C = B^T`` exactly.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    h, nodes, K, Mm = _fem_matrices(N)
    L = np.linalg.cholesky(Mm)
    G = np.linalg.cholesky(K)
    # F_i = int b phi_i; exact for linear b and symmetric hat functions
    F = h * 2.0 * (1.0 - nodes)
    LinvG = scipy.linalg.solve_triangular(L, G, lower=True)
    Z = np.zeros((N, N))
    A = np.block([[Z, LinvG.T], [-LinvG, Z]])
    b = scipy.linalg.solve_triangular(L, F, lower=True)
    B = np.concatenate([np.zeros(N), b]).reshape(-1, 1)
    return StateSpaceSystem(A, B, B.T.copy(), np.zeros((1, 1)), label="wave-distributed",
                            meta={"N": N, "h": h, "nodes": nodes, "L": L, "G": G})


def wave_distributed_state(plant, w0, w1=None):
    """Map nodal displacement and velocity to the normalized FEM state."""
    N = plant.meta["N"]
    nodes = plant.meta["nodes"]
    w = np.asarray(w0(nodes) if callable(w0) else w0, dtype=float)
    if w1 is None:
        v = np.zeros(N)
    else:
        v = np.asarray(w1(nodes) if callable(w1) else w1, dtype=float)
    return np.concatenate([plant.meta["G"].T @ w, plant.meta["L"].T @ v])


def wave_distributed_displacement(plant, x):
    """Nodal displacement ``w`` recovered from a normalized FEM state."""
    N = plant.meta["N"]
    return scipy.linalg.solve_triangular(plant.meta["G"].T, np.real(x[:N]), lower=False)


def build_heat_2d(N=20):
    """Cell-centred finite volumes for the Neumann heat equation.

    Cells have width ``h = 1/N``; the state is ``h`` times the cell averages,
    so the discrete L2 norm is Euclidean.  The left-edge input and the
    left-edge integral output then both have unit entries, ``C = B^T``.
    The disturbance enters through top-row cells whose centre lies in
    ``x1 > 1/2``.
    """
    if N < 8:
        raise ValueError("N must be at least 8")
    h = 1.0 / N
    lap1 = -2 * np.eye(N) + np.eye(N, k=1) + np.eye(N, k=-1)
    lap1[0, 0] = lap1[-1, -1] = -1.0
    I = np.eye(N)
    # index = i * N + j with i along x1 and j along x2
    A = (np.kron(lap1, I) + np.kron(I, lap1)) / h**2
    B = np.zeros((N * N, 1))
    B[0:N, 0] = 1.0
    Bd = np.zeros((N * N, 1))
    centres = (np.arange(N) + 0.5) * h
    for i in np.flatnonzero(centres > 0.5):
        Bd[i * N + (N - 1), 0] = 1.0
    return StateSpaceSystem(A, B, B.T.copy(), np.zeros((1, 1)), Bd=Bd, label="heat-2d",
                            meta={"N": N, "h": h, "centres": centres})


def heat_state(plant, x0):
    """Normalized heat state from a function of ``(x1, x2)`` or a grid array."""
    N, h, c = plant.meta["N"], plant.meta["h"], plant.meta["centres"]
    X1, X2 = np.meshgrid(c, c, indexing="ij")
    vals = x0(X1, X2) if callable(x0) else np.asarray(x0).reshape(N, N)
    return h * np.asarray(vals, dtype=float).reshape(-1)


BUILDERS = {
    "wave-boundary": build_wave_boundary,
    "wave-distributed": build_wave_distributed,
    "heat-2d": build_heat_2d,
}


def exact_transfer(model, lam):
    """Closed-form transfer function of the continuous plant.

    ``wave-boundary``: ``(1 + e^{-2 lam}) / (1 - e^{-2 lam})``.
    ``heat-2d``: ``coth(sqrt lam) / sqrt lam`` with the principal root.
    ``wave-distributed``: ``4/(3 lam) - 4 coth(lam)/lam^2 + 4/lam^3``, from
    solving the resolvent equation with the linear profile ``b``.
    """
    lam = complex(lam)
    if model == "wave-boundary":
        if lam.real > 350:
            return 1.0 + 0j
        e = np.exp(-2 * lam)
        if abs(1 - e) < 1e-14:
            raise PoleHit(f"wave transfer has a pole at {lam}")
        return (1 + e) / (1 - e)
    if model == "heat-2d":
        if abs(lam) < 1e-300:
            raise PoleHit("heat transfer has a pole at 0")
        s = np.sqrt(lam)
        if s.real > 350:
            coth = 1.0
        else:
            e = np.exp(-2 * s)
            if abs(1 - e) < 1e-14:
                raise PoleHit(f"heat transfer has a pole at {lam}")
            coth = (1 + e) / (1 - e)
        return coth / s
    if model == "wave-distributed":
        if abs(lam) < 0.05:
            # the closed form cancels like 1/lam^3 near 0; the Laurent series
            # of coth truncated after lam^5 is accurate to about 1e-13 here
            return 4 * lam / 45 - 8 * lam**3 / 945 + 4 * lam**5 / 4725
        if lam.real > 350:
            coth = 1.0
        else:
            e = np.exp(-2 * lam)
            if abs(1 - e) < 1e-14:
                raise PoleHit(f"wave transfer has a pole at {lam}")
            coth = (1 + e) / (1 - e)
        return 4 / (3 * lam) - 4 * coth / lam**2 + 4 / lam**3
    raise ValueError(f"unknown model {model!r}")


def sine_mode_coefficients(plant, kmax):
    """``<b, sqrt 2 sin(k pi x)>`` recovered from the discrete input vector.

    The FEM load vector ``F`` is projected on the interpolated sine modes,
    ``F . s_k``, which approximates the continuous inner product.
    """
    nodes = plant.meta["nodes"]
    h = plant.meta["h"]
    F = h * 2.0 * (1.0 - nodes)
    ks = np.arange(1, kmax + 1)
    return np.array([F @ (np.sqrt(2) * np.sin(k * np.pi * nodes)) for k in ks])


# ---------------------------------------------------------------------------
# example configurations


@dataclass
class ExampleSetup:
    """Everything needed to reproduce one of the three worked examples."""

    name: str
    plant: StateSpaceSystem
    ctrl: object
    signal: SignalSpec
    x0: np.ndarray
    z0: np.ndarray
    t_final: float
    dt: float
    notes: dict = field(default_factory=dict)


def wave_boundary_signal():
    """A 1-periodic reference ``cos(2 pi t) + 0.5 sin(4 pi t)``."""
    w1, w2 = 2 * np.pi, 4 * np.pi
    entries = [
        (-w2, 0.25j, None),
        (-w1, 0.5, None),
        (w1, 0.5, None),
        (w2, -0.25j, None),
    ]
    return SignalSpec(tuple(entries), p=1, m_d=0, real_valued=True)


def example_wave_boundary(N=100, modes=21, D_c1=1.0, D_c2=1.0, t_final=10.0, dt=2e-3):
    plant = build_wave_boundary(N)
    ctrl = build_transport(1.0, 1, modes, D_c1=D_c1, D_c2=D_c2)
    x0 = np.zeros(plant.n)
    z0 = np.zeros(ctrl.n_c, dtype=complex)
    return ExampleSetup("wave-boundary", plant, ctrl, wave_boundary_signal(), x0, z0, t_final, dt)


def wave_distributed_signal():
    """``sin(pi t) + cos(2 pi t)/4``."""
    entries = [
        (-2 * np.pi, 0.125, None),
        (-np.pi, 0.5j, None),
        (np.pi, -0.5j, None),
        (2 * np.pi, 0.125, None),
    ]
    return SignalSpec(tuple(entries), p=1, m_d=0, real_valued=True)


def wave_distributed_initial(xi):
    return xi * (1 - xi) * (2 - 5 * xi)


def example_wave_distributed(N=24, k=3.0, D_c1=34.0, D_c2=1.0, t_final=24.0, dt=1e-3):
    plant = build_wave_distributed(N)
    ctrl = build_fin_dim_real([np.pi, 2 * np.pi], 1, gains=k, D_c1=D_c1, D_c2=D_c2)
    x0 = wave_distributed_state(plant, wave_distributed_initial)
    z0 = np.zeros(ctrl.n_c)
    return ExampleSetup("wave-distributed", plant, ctrl, wave_distributed_signal(), x0, z0,
                        t_final, dt)


def heat_reference_coefficient(k):
    """Fourier coefficient of the 2-periodic alternating parabola.

    ``y_ref = t(1 - t)`` on [0, 1] and ``-(t - 1)(2 - t)`` on [1, 2] has the
    sine series ``sum_{n odd} 8/(pi^3 n^3) sin(n pi t)``.
    """
    if k % 2 == 0:
        return 0.0
    return -1j * 4 / (np.pi**3 * k**3)


def heat_reference(t):
    t = np.asarray(t, dtype=float)
    s = np.mod(t, 2.0)
    return np.where(s <= 1.0, s * (1 - s), -(s - 1) * (2 - s))


def heat_signal(N_S=15, w_amp=0.5):
    """Reference above plus the disturbance ``w_amp sin(pi t)``."""
    entries = []
    for k in range(-N_S, N_S + 1):
        y = heat_reference_coefficient(k)
        w = 0.0
        if abs(k) == 1:
            w = -0.5j * w_amp * np.sign(k)
        entries.append((np.pi * k, y, w))
    return SignalSpec(tuple(entries), p=1, m_d=1, real_valued=True)


def heat_initial(x1, x2):
    return -(1 + x1**2 / 4 - x1**3 / 6) * (np.cos(np.pi * x2) / 10 + 2)


def example_heat_2d(N=20, N_S=15, c=8.0, eps=0.1, D_c1=0.0, D_c2=15.0, t_final=10.0, dt=2e-3):
    from passreg.regulation import compatible_initial_state

    plant = build_heat_2d(N)
    freqs = np.pi * np.arange(-N_S, N_S + 1)
    ctrl = build_diagonal(freqs, 1, c, eps, D_c1=D_c1, D_c2=D_c2)
    sig = heat_signal(N_S)
    x0 = heat_state(plant, heat_initial)
    z0 = compatible_initial_state(plant, ctrl, x0, heat_reference(0.0))
    return ExampleSetup("heat-2d", plant, ctrl, sig, x0, z0, t_final, dt)


EXAMPLES = {
    "wave-boundary": example_wave_boundary,
    "wave-distributed": example_wave_distributed,
    "heat-2d": example_heat_2d,
}
