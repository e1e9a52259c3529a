import pytest

from nonlocal_critical.constants import DomainSpec
from nonlocal_critical.grid3d import assemble_grid_bundle, make_grid
from nonlocal_critical.radial import RadialMesh, assemble_radial_bundle
from nonlocal_critical.spectral import solve_spectrum


@pytest.fixture(scope="session")
def radial_a1():
    """N=3, alpha=1 on the unit ball, 400 uniform cells."""
    return assemble_radial_bundle(RadialMesh.uniform(3, 1.0, 400), 1.0)


@pytest.fixture(scope="session")
def radial_a2():
    return assemble_radial_bundle(RadialMesh.uniform(3, 1.0, 400), 2.0)


@pytest.fixture(scope="session")
def radial_a1_spectrum(radial_a1):
    return solve_spectrum(radial_a1, 8)


@pytest.fixture(scope="session")
def grid_a2():
    return assemble_grid_bundle(make_grid(DomainSpec.ball(1.0), 24), 2.0)


# one summary line per acceptance criterion, grouped across sub-checks
_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(ok), detail))
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
