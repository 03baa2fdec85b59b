import numpy as np
import pytest

from transfer_bandit.spd import SpdMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, d, ridge=1.0):
    a = rng.standard_normal((d, d))
    return SpdMatrix(a @ a.T + ridge * np.eye(d))


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def main_study(s, n_off=2000, sigma=0.1):
    """theta_* = (s,1,1,1,1), theta_dagger = (1,s,1,1,1) with S = max norm."""
    from transfer_bandit.environment import BanditInstance, OfflineSpec
    from transfer_bandit.offline import BiasCertificate

    ts = np.array([s, 1, 1, 1, 1.0])
    td = np.array([1, s, 1, 1, 1.0])
    S = float(max(np.linalg.norm(ts), np.linalg.norm(td)))
    inst = BanditInstance(ts, K=5, sigma=sigma, S=S)
    cert = BiasCertificate(SpdMatrix.identity(5), float(np.linalg.norm(ts - td)))
    return inst, OfflineSpec(td, n_off, S=S), cert


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail):
    """Remember one PASS/FAIL line; the lines are echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
