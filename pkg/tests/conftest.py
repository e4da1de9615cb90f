import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from encobs.crypto import CryptoParams, keygen
from encobs.plant import STUDY_PARAMS, dc_motor
from encobs.stability.certificate import (
    maximize_gamma,
    read_certificate,
    solve_feasibility,
    write_certificate,
)
from encobs.stability.lmi import LmiProblem

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def motor():
    return dc_motor(STUDY_PARAMS)


@pytest.fixture(scope="session")
def motor_problem(motor):
    return LmiProblem.from_realization(motor)


@pytest.fixture
def small_params():
    return CryptoParams.with_bits(16, 4, e_max=1, seed=0)


@pytest.fixture
def key16(small_params):
    return keygen(small_params, np.random.default_rng(0))


class CertificateStore:
    """Certificates computed once and kept in the pytest cache directory."""

    def __init__(self, cache_dir, problem):
        self.dir = cache_dir
        self.problem = problem
        self._mem = {}

    def _get(self, tag, h, compute):
        key = (tag, h)
        if key in self._mem:
            return self._mem[key]
        path = self.dir / f"{tag}_h{h:g}.cert"
        cert = None
        if path.exists():
            cert = read_certificate(path)
        else:
            cert = compute()
            if cert is not None:
                write_certificate(cert, path)
        self._mem[key] = cert
        return cert

    def plain(self, h):
        return self._get("plain", h, lambda: solve_feasibility(self.problem, h).certificate)

    def best_gamma(self, h):
        return self._get("gmax", h, lambda: maximize_gamma(self.problem, h).certificate)


@pytest.fixture(scope="session")
def certs(request, motor_problem):
    path = request.config.cache.mkdir("encobs_certificates")
    return CertificateStore(path, motor_problem)


# -- acceptance summary ----------------------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
