import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from passreg.lti import StateSpaceSystem

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_passive(rng, n, p=1, complex_=True, m_d=0, strict=0.0):
    """Random passive system with ``C = B^*`` and dissipative ``A``.

    ``A = K - L L^* - strict I`` with ``K`` skew; ``D`` has positive
    Hermitian part.
    """
    def mat(r, c):
        X = rng.standard_normal((r, c))
        if complex_:
            X = X + 1j * rng.standard_normal((r, c))
        return X

    K = mat(n, n)
    K = 0.5 * (K - K.conj().T)
    L = mat(n, n) / np.sqrt(n)
    A = K - 0.5 * L @ L.conj().T - strict * np.eye(n)
    B = mat(n, p)
    E = mat(p, p)
    D = E @ E.conj().T / p + 0.5 * (E - E.conj().T)
    Bd = mat(n, m_d) if m_d else None
    return StateSpaceSystem(A, B, B.conj().T, D, Bd=Bd, label="random")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
