import os
import tempfile

import numpy as np
import pytest

# node sets are cached on disk; keep test runs hermetic
os.environ.setdefault("BANDINTERP_CACHE", tempfile.mkdtemp(prefix="bandinterp-test-"))

from bandinterp.fem import ModeCoefficients, assemble  # noqa: E402
from bandinterp.mesh import empty_geometry, generate_mesh, hexagonal_geometry, square_geometry  # noqa: E402


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def square_mesh():
    g = square_geometry()
    return g, generate_mesh(g, 0.05)


@pytest.fixture(scope="session")
def hex_mesh():
    g = hexagonal_geometry()
    return g, generate_mesh(g, 0.05)


@pytest.fixture(scope="session")
def empty_mesh():
    g = empty_geometry("square")
    return g, generate_mesh(g, 0.05)


@pytest.fixture(scope="session")
def systems(square_mesh, hex_mesh):
    out = {}
    for name, (g, m) in (("square", square_mesh), ("hexagonal", hex_mesh)):
        for mode in ("tm", "te"):
            out[name, mode] = assemble(m, ModeCoefficients.from_geometry(g, mode))
    return out


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
