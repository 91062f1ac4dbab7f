"""Passive internal-model controllers and the signals they track.

Three designs are provided: a finite-dimensional controller with one block of
``p`` modes per signal frequency (complex or real form), a modal truncation of
the periodic transport (repetitive) controller, and a diagonal controller with
mode weights decaying like ``(1 + |k|)^(-1/2 - eps)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import polygamma

from passreg import numerics
from passreg.lti import DEFAULT_TOL, decode_matrix, encode_matrix
from passreg.numerics import as_matrix

RECIPES = ("FinDim", "FinDimReal", "Transport", "Diagonal")


class SingularGain(ValueError):
    """A mode gain ``C_c^k`` is not invertible."""


class PoleHit(ValueError):
    """Closed-form evaluation requested at a pole."""


class ModeNotRetained(ValueError):
    """A requested frequency is not among the controller's modes."""


def _vec(v, dim, name):
    if v is None:
        return np.zeros(dim, dtype=complex)
    arr = np.asarray(v, dtype=complex).reshape(-1)
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.size != dim:
        raise ValueError(f"{name} has length {arr.size}, expected {dim}")
    return arr


@dataclass(frozen=True)
class SignalSpec:
    """Finite Fourier description of the reference and the disturbance.

    ``y_ref(t) = sum_k y_k exp(i w_k t)`` and likewise for ``w_dist``.

    Parameters
    ----------
    entries : sequence of ``(omega, y_ref, w_dist)``
        ``y_ref`` is a vector in the output space, ``w_dist`` in the
        disturbance space (``None`` for zero).
    p, m_d : int
        Output and disturbance dimensions.
    real_valued : bool
        Require the entries to be closed under ``(w, v) -> (-w, conj v)``.
    """

    entries: tuple
    p: int = 1
    m_d: int = 0
    real_valued: bool = False

    def __post_init__(self):
        clean = []
        for omega, y, w in self.entries:
            clean.append((float(omega), _vec(y, self.p, "y_ref"), _vec(w, self.m_d, "w_dist")))
        omegas = [e[0] for e in clean]
        if len(set(omegas)) != len(omegas):
            raise ValueError("signal frequencies must be pairwise distinct")
        if self.real_valued:
            table = {e[0]: e for e in clean}
            for omega, y, w in clean:
                mirror = table.get(-omega)
                scale = 1e-12 * max(1.0, np.max(np.abs(y), initial=0), np.max(np.abs(w), initial=0))
                if mirror is None:
                    raise ValueError(f"real signal lacks the mirror of omega={omega}")
                if np.max(np.abs(mirror[1] - y.conj()), initial=0) > scale or np.max(
                    np.abs(mirror[2] - w.conj()), initial=0
                ) > scale:
                    raise ValueError(f"coefficients at +-{abs(omega)} are not conjugate")
        clean.sort(key=lambda e: e[0])
        object.__setattr__(self, "entries", tuple(clean))

    @property
    def frequencies(self):
        return np.array([e[0] for e in self.entries])

    def y_coefficients(self):
        return np.array([e[1] for e in self.entries]).reshape(len(self.entries), self.p)

    def w_coefficients(self):
        return np.array([e[2] for e in self.entries]).reshape(len(self.entries), self.m_d)

    def __len__(self):
        return len(self.entries)

    def to_json(self):
        return [
            {
                "omega": om,
                "y_ref": [[float(v.real), float(v.imag)] for v in y],
                "w_dist": [[float(v.real), float(v.imag)] for v in w],
            }
            for om, y, w in self.entries
        ]

    @classmethod
    def from_json(cls, items, real_valued=None):
        entries = []
        p = m_d = None
        for it in items:
            y = np.array([complex(a, b) for a, b in it.get("y_ref", [])])
            w = np.array([complex(a, b) for a, b in it.get("w_dist", [])])
            p = y.size if p is None else p
            m_d = w.size if m_d is None else m_d
            entries.append((it["omega"], y, w))
        if not entries:
            return cls((), 1, 0, bool(real_valued))
        if real_valued is None:
            freqs = {e[0] for e in entries}
            real_valued = all(-f in freqs for f in freqs)
        try:
            return cls(tuple(entries), p, m_d, real_valued)
        except ValueError:
            if real_valued:
                return cls(tuple(entries), p, m_d, False)
            raise


@dataclass(frozen=True, eq=False)
class ControllerRealization:
    """Controller ``z' = A_c z + B_c u_c``, ``y_c = C_c z + (D_c1 + D_c2) u_c``.

    ``D_c2`` is the part of the feedthrough that is read as static output
    feedback pre-stabilizing the plant; the closed loop only sees the sum.
    """

    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    D_c1: np.ndarray
    D_c2: np.ndarray
    recipe: str
    frequencies: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ValueError(f"unknown recipe {self.recipe!r}")
        A_c = as_matrix(self.A_c, "A_c")
        B_c = as_matrix(self.B_c, "B_c")
        C_c = as_matrix(self.C_c, "C_c")
        n_c = A_c.shape[0]
        p = B_c.shape[1]
        if A_c.shape != (n_c, n_c) or B_c.shape[0] != n_c or C_c.shape != (p, n_c):
            raise ValueError(
                f"inconsistent controller shapes A_c {A_c.shape}, B_c {B_c.shape}, C_c {C_c.shape}"
            )
        D_c1 = _feedthrough(self.D_c1, p, "D_c1")
        D_c2 = _feedthrough(self.D_c2, p, "D_c2")
        for name, val in (("A_c", A_c), ("B_c", B_c), ("C_c", C_c), ("D_c1", D_c1), ("D_c2", D_c2)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))

    @property
    def n_c(self):
        return self.A_c.shape[0]

    @property
    def p(self):
        return self.B_c.shape[1]

    @property
    def D_c(self):
        return self.D_c1 + self.D_c2

    def transfer(self, lam):
        """``G(lam) = C_c (lam - A_c)^{-1} B_c + D_c``."""
        from passreg.lti import resolvent_apply

        return self.C_c @ resolvent_apply(self.A_c, lam, self.B_c) + self.D_c

    def as_system(self):
        """The controller as a :class:`StateSpaceSystem` with ``D = D_c1``."""
        from passreg.lti import StateSpaceSystem

        return StateSpaceSystem(self.A_c, self.B_c, self.C_c, self.D_c1, label=self.recipe)

    def replace(self, **changes):
        kw = dict(A_c=self.A_c, B_c=self.B_c, C_c=self.C_c, D_c1=self.D_c1, D_c2=self.D_c2,
                  recipe=self.recipe, frequencies=self.frequencies, meta=dict(self.meta))
        kw.update(changes)
        return ControllerRealization(**kw)

    def to_json(self):
        n_c, p = self.n_c, self.p
        return {
            "n": n_c,
            "m": p,
            "m_d": 0,
            "p": p,
            "recipe": self.recipe,
            "frequencies": list(self.frequencies),
            "A": encode_matrix(self.A_c),
            "B": encode_matrix(self.B_c),
            "C": encode_matrix(self.C_c),
            "D": encode_matrix(self.D_c),
            "D_c1": encode_matrix(self.D_c1),
            "D_c2": encode_matrix(self.D_c2),
        }

    @classmethod
    def from_json(cls, obj):
        n, p = int(obj["n"]), int(obj["p"])
        return cls(
            A_c=decode_matrix(obj["A"], n, n),
            B_c=decode_matrix(obj["B"], n, p),
            C_c=decode_matrix(obj["C"], p, n),
            D_c1=decode_matrix(obj["D_c1"], p, p),
            D_c2=decode_matrix(obj["D_c2"], p, p),
            recipe=obj["recipe"],
            frequencies=tuple(obj.get("frequencies", ())),
        )


def _feedthrough(D, p, name):
    D = np.asarray(D)
    if D.ndim == 0:
        return float(D) * np.eye(p) if np.isrealobj(D) else complex(D) * np.eye(p)
    return as_matrix(D, name).reshape(p, p)


def _gain_list(gains, q, p):
    """Normalize gains to ``q`` matrices.

    A scalar or a single 2-D array is used for every mode; otherwise one
    scalar or matrix per mode is expected.
    """
    if np.ndim(gains) == 0 or (isinstance(gains, np.ndarray) and gains.ndim == 2):
        gains = [gains] * q
    if len(gains) != q:
        raise ValueError(f"expected {q} gains, got {len(gains)}")
    out = []
    for k, g in enumerate(gains):
        G = float(g) * np.eye(p) if np.ndim(g) == 0 and np.isrealobj(g) else None
        if G is None:
            G = complex(g) * np.eye(p) if np.ndim(g) == 0 else as_matrix(g, f"gain {k}")
        if G.shape != (p, p):
            raise ValueError(f"gain {k} must be {(p, p)}, got {G.shape}")
        if numerics.min_singular_value(G) <= 1e-12 * max(1.0, np.linalg.norm(G, 2)):
            raise SingularGain(f"gain {k} is not invertible")
        out.append(G)
    return out


def build_fin_dim(freqs, p, gains=1.0, D_c1=1.0, D_c2=0.0):
    """Finite-dimensional internal model in complex diagonal form.

    ``A_c = diag(i w_1 I_p, ..., i w_q I_p)``, ``C_c = [C_c^1, ..., C_c^q]``
    and ``B_c = C_c^*``.

    Examples
    --------
    >>> ctrl = build_fin_dim([0.0], 1)
    >>> ctrl.A_c.tolist(), ctrl.C_c.tolist()
    ([[0j]], [[(1+0j)]])
    """
    freqs = [float(w) for w in freqs]
    if len(set(freqs)) != len(freqs):
        raise ValueError("frequencies must be distinct")
    q = len(freqs)
    G = _gain_list(gains, q, p)
    A_c = np.diag(np.repeat(1j * np.array(freqs), p)).astype(complex)
    C_c = np.hstack(G).astype(complex) if q else np.zeros((p, 0), dtype=complex)
    return ControllerRealization(A_c, C_c.conj().T, C_c, D_c1, D_c2, "FinDim", tuple(freqs))


def build_fin_dim_real(freqs, p, gains=1.0, D_c1=1.0, D_c2=0.0):
    """Real block form of the finite-dimensional controller.

    Each positive frequency contributes ``J_k = [[0, w I], [-w I, 0]]`` and a
    gain block ``[C_c^k, 0]``; a zero frequency contributes a ``p x p`` zero
    block with gain ``C_c^0``.  ``B_c = C_c^T``.

    The mode list (``frequencies``) contains both ``+w`` and ``-w``.
    """
    freqs = sorted(float(w) for w in freqs)
    if any(w < 0 for w in freqs) or len(set(freqs)) != len(freqs):
        raise ValueError("real variant takes distinct nonnegative frequencies")
    G = _gain_list(gains, len(freqs), p)
    blocks, gain_cols, modes = [], [], []
    for w, Gk in zip(freqs, G):
        if np.iscomplexobj(Gk) and np.any(Gk.imag):
            raise ValueError("real variant needs real gains")
        Gk = Gk.real
        if w == 0.0:
            blocks.append(np.zeros((p, p)))
            gain_cols.append(Gk)
            modes.append(0.0)
        else:
            I = np.eye(p)
            Z = np.zeros((p, p))
            blocks.append(np.block([[Z, w * I], [-w * I, Z]]))
            gain_cols.append(np.hstack([Gk, Z]))
            modes.extend([-w, w])
    A_c = scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))
    C_c = np.hstack(gain_cols) if gain_cols else np.zeros((p, 0))
    return ControllerRealization(A_c, C_c.T, C_c, D_c1, D_c2, "FinDimReal", tuple(sorted(modes)))


def real_to_complex_basis(freqs, p):
    """Unitary ``V`` with ``V^* A_c V`` diagonal for :func:`build_fin_dim_real`.

    For each positive-frequency block ``V_k = (1/sqrt 2)[[I, I], [iI, -iI]]``,
    which maps ``J_k`` to ``diag(i w I, -i w I)``; zero blocks use ``I``.
    """
    blocks = []
    I = np.eye(p)
    for w in sorted(float(f) for f in freqs):
        if w == 0.0:
            blocks.append(I.astype(complex))
        else:
            blocks.append(np.block([[I, I], [1j * I, -1j * I]]) / np.sqrt(2))
    return scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0), dtype=complex)


def transport_mode_frequencies(tau, N):
    K = (int(N) - 1) // 2
    return 2 * np.pi * np.arange(-K, K + 1) / tau


def build_transport(tau, p, N, D_c1=1.0, D_c2=0.0, tail_correction=True):
    """Modal realization of the periodic transport controller.

    The transfer function of the infinite-dimensional controller is
    ``G_0(lam) = coth(lam tau / 2) I + D_c1 + D_c2``, whose partial fractions
    are ``(2/tau) / (lam - i w_k)`` with ``w_k = 2 pi k / tau``.  The retained
    modes ``|k| <= (N-1)/2`` use ``B_c^k = C_c^k = sqrt(2/tau) I`` and reproduce
    these fractions exactly.

    The discarded fractions add up to roughly ``lam / (pi^2 K)``, which for
    moderate ``K`` is a few percent near the origin.  With
    ``tail_correction`` one extra passive first-order state per channel,
    ``c W lam / (lam + W)`` with ``W = 2 w_{K+1}`` and ``c`` the exact
    low-frequency slope of the tail, absorbs most of that error.  Its
    constant part ``c W`` is added to ``D_c1``; the extra pole sits at
    ``-W`` and leaves the imaginary-axis spectrum untouched.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if N < 8:
        raise ValueError("N must be at least 8")
    omegas = transport_mode_frequencies(tau, N)
    K = (len(omegas) - 1) // 2
    gain = np.sqrt(2.0 / tau)
    q = len(omegas)
    A_c = np.diag(np.repeat(1j * omegas, p)).astype(complex)
    C_c = gain * np.tile(np.eye(p), (1, q)).astype(complex)
    B_c = C_c.conj().T
    D_c1 = _feedthrough(D_c1, p, "D_c1")
    meta = {"tau": tau, "modes": q, "tail_states": 0}
    if tail_correction:
        w1 = 2 * np.pi / tau
        slope = 4.0 / w1**2 * float(polygamma(1, K + 1))
        W = 2.0 * w1 * (K + 1)
        b = np.sqrt(slope) * W
        d = slope * W
        A_c = np.block([[A_c, np.zeros((q * p, p))], [np.zeros((p, q * p)), -W * np.eye(p)]])
        B_c = np.vstack([B_c, b * np.eye(p)])
        C_c = np.hstack([C_c, -b * np.eye(p)])
        D_c1 = D_c1 + d * np.eye(p)
        meta.update(tail_states=p, tail_pole=-W, tail_feedthrough=d)
    return ControllerRealization(A_c, B_c, C_c, D_c1, D_c2, "Transport", tuple(omegas), meta)


def transport_transfer_exact(lam, tau, D_sum=0.0):
    """``(1 + e^{-lam tau}) / (1 - e^{-lam tau}) + D_sum``.

    Raises :class:`PoleHit` at ``lam = 2 pi i k / tau``.
    """
    lam = complex(lam)
    if lam.real > 350.0 / tau:
        return 1.0 + D_sum
    e = np.exp(-lam * tau)
    den = 1.0 - e
    if abs(den) < 1e-14:
        raise PoleHit(f"lambda={lam} is a pole of the transport controller")
    return (1.0 + e) / den + D_sum


def mode_basis(ctrl, omega, rtol=1e-10):
    """Orthonormal basis ``V`` of ``ker(i omega - A_c)``.

    Diagonal recipes return coordinate blocks; others fall back to a
    numerical null space.
    """
    A_c = ctrl.A_c
    n_c = ctrl.n_c
    if ctrl.recipe in ("FinDim", "Diagonal", "Transport") or not np.any(A_c - np.diag(np.diag(A_c))):
        diag = np.diag(A_c)
        off = A_c - np.diag(diag)
        if not np.any(off):
            idx = np.flatnonzero(np.abs(diag - 1j * omega) <= rtol * max(1.0, abs(omega)))
            V = np.zeros((n_c, idx.size), dtype=complex)
            V[idx, np.arange(idx.size)] = 1.0
            return V
    return numerics.null_space(1j * omega * np.eye(n_c) - A_c, rtol)


def mode_gain(ctrl, omega):
    """``C_c^k = C_c V_k`` for the kernel basis ``V_k`` at ``omega``."""
    V = mode_basis(ctrl, omega)
    return ctrl.C_c @ V, V


def stabilize_transport_modes(ctrl, mus):
    """Damp the listed modes: ``A_c - B_0 B_0^*`` with unit mode vectors.

    Each listed eigenvalue ``i mu`` moves to ``i mu - 1``.
    """
    if ctrl.recipe != "Transport":
        raise ValueError("stabilize_transport_modes needs a Transport controller")
    if len(mus) == 0:
        return ctrl
    cols = []
    for mu in mus:
        V = mode_basis(ctrl, float(mu))
        if V.shape[1] == 0:
            raise ModeNotRetained(f"frequency {mu} is not a retained mode")
        cols.append(V)
    B0 = np.hstack(cols)
    A_c = ctrl.A_c - B0 @ B0.conj().T
    removed = {float(m) for m in mus}
    freqs = tuple(w for w in ctrl.frequencies if not any(abs(w - r) <= 1e-10 * max(1, abs(r)) for r in removed))
    meta = dict(ctrl.meta)
    meta["stabilized_modes"] = sorted(removed)
    return ctrl.replace(A_c=A_c, frequencies=freqs, meta=meta)


def build_diagonal(freqs, p, c, eps, D_c1=0.0, D_c2=0.0, indices=None):
    """Diagonal controller with decaying mode weights.

    ``A_c = diag(i w_k I_p)``, ``B_c^k = c (1 + |k|)^(-1/2 - eps) I`` and
    ``C_c = B_c^*``.  ``indices`` are the integer labels ``k`` used in the
    weight; by default ``freqs`` is read as ``w_{-N}, ..., w_N``.
    """
    freqs = [float(w) for w in freqs]
    if c <= 0 or eps <= 0:
        raise ValueError("c and eps must be positive")
    if indices is None:
        if len(freqs) % 2 == 0:
            raise ValueError("pass indices for an even number of frequencies")
        half = (len(freqs) - 1) // 2
        indices = list(range(-half, half + 1))
    if len(indices) != len(freqs):
        raise ValueError("indices and freqs differ in length")
    if len(indices) < 1:
        raise ValueError("need at least one mode")
    weights = c * (1.0 + np.abs(np.asarray(indices, dtype=float))) ** (-0.5 - eps)
    A_c = np.diag(np.repeat(1j * np.array(freqs), p)).astype(complex)
    B_c = np.kron(weights.reshape(-1, 1), np.eye(p)).astype(complex)
    meta = {"c": c, "eps": eps, "indices": list(indices)}
    return ControllerRealization(A_c, B_c, B_c.conj().T, D_c1, D_c2, "Diagonal", tuple(freqs), meta)


@dataclass(frozen=True)
class InternalModelRow:
    omega: float
    kernel_dim: int
    kernel_ok: bool
    input_injective: bool
    ranges_disjoint: bool

    @property
    def ok(self):
        return self.kernel_ok and self.input_injective and self.ranges_disjoint


@dataclass(frozen=True)
class InternalModelReport:
    rows: tuple

    @property
    def all_pass(self):
        return all(r.ok for r in self.rows)

    def failing(self):
        return [r.omega for r in self.rows if not r.ok]


def verify_internal_model(ctrl, sig, p=None, rtol=1e-10):
    """Rank tests of the internal-model conditions at each signal frequency.

    * ``dim ker(i w_k - A_c) >= p``
    * ``ker B_c = {0}``
    * ``ran(i w_k - A_c) and ran(B_c)`` intersect trivially, tested as
      ``rank [i w_k - A_c, B_c] = rank(i w_k - A_c) + rank(B_c)``.
    """
    p = ctrl.p if p is None else p
    freqs = sig.frequencies if isinstance(sig, SignalSpec) else np.asarray(sig, dtype=float)
    n_c = ctrl.n_c
    rank_B = numerics.numerical_rank(ctrl.B_c, rtol)
    rows = []
    for w in freqs:
        Mw = 1j * w * np.eye(n_c) - ctrl.A_c
        r = numerics.numerical_rank(Mw, rtol) if n_c else 0
        kdim = n_c - r
        r_joint = numerics.numerical_rank(np.hstack([Mw, ctrl.B_c]), rtol)
        rows.append(InternalModelRow(float(w), kdim, kdim >= p, rank_B == p, r_joint == r + rank_B))
    return InternalModelReport(tuple(rows))


def gain_pseudoinverse_norms(ctrl):
    """``||(C_c^k)^+||`` for each retained mode of the controller."""
    out = []
    for w in ctrl.frequencies:
        Ck, _ = mode_gain(ctrl, w)
        out.append(numerics.pseudoinverse_norm(Ck, cutoff=DEFAULT_TOL * 1e-3))
    return np.array(out)
