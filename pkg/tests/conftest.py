import numpy as np
import pytest

from qgcontact.boundary import ContactSpec, build_layout, preset_vertex_conditions
from qgcontact.dissect import dissect
from qgcontact.fem import assemble, build_mesh
from qgcontact.graph import interval, ring

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Collects one pass/fail line per acceptance criterion for the summary."""

    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_form(g, N, preset, contact, h, weights="distinguishable"):
    layout = build_layout(g, N) if N <= 2 else None
    mesh = build_mesh(dissect(g, N, layout=layout), h)
    vc = preset_vertex_conditions(preset, g, N)
    return assemble(mesh, layout, vc, contact, weights=weights)


@pytest.fixture
def square_neumann_free():
    return make_form(interval(np.pi), 2, "neumann", ContactSpec.delta(0.0), np.pi / 8)


@pytest.fixture
def ring_delta():
    return make_form(ring(2 * np.pi), 2, "kirchhoff", ContactSpec.delta(2.0), 2 * np.pi / 12)
