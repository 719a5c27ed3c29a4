import numpy as np
import pytest

from nhwave.operator import assemble_operator, build_grid, compute_eigensystem, harmonic, harmonic_complex

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def ho20():
    return compute_eigensystem(assemble_operator(build_grid(12, 481), harmonic()), 20)


@pytest.fixture(scope="session")
def cx20():
    return compute_eigensystem(assemble_operator(build_grid(12, 481), harmonic_complex()), 20)


@pytest.fixture(scope="session")
def ho_small():
    # cheap system for the pipeline unit tests
    return compute_eigensystem(assemble_operator(build_grid(10, 201), harmonic()), 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def acceptance_record():
    def rec(key: str, label: str, ok: bool, detail: str = ""):
        _ACCEPTANCE[key] = (label, bool(ok), detail)
        return ok
    return rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k)):
        label, ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key:>2}. {label}  {detail}")


try:
    from hypothesis import settings as _hsettings
    _hsettings.register_profile("repro", derandomize=True)
    _hsettings.load_profile("repro")
except ImportError:  # pragma: no cover
    pass
