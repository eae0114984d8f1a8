import numpy as np
import pytest

from hirise.sensor import CircuitParams, PixelArray, SensorConfig


def mna_node_voltage(inputs, vdd, resistance, factors=None):
    """Modified nodal analysis of the averaging network, solved directly.

    Unknowns: voltages of the N input nodes, node G and the supply node,
    plus one current per ideal voltage source (N inputs and -VDD).
    """
    v = np.asarray(inputs, dtype=float)
    n = v.size
    r_branch = np.full(n, n * resistance)
    if factors is not None:
        r_branch = r_branch * factors
    nodes = n + 2  # inputs 0..n-1, G = n, supply = n + 1
    g_node, supply = n, n + 1
    size = nodes + n + 1
    a = np.zeros((size, size))
    b = np.zeros(size)

    def stamp(p, q, g):
        a[p, p] += g
        a[q, q] += g
        a[p, q] -= g
        a[q, p] -= g

    for i in range(n):
        stamp(i, g_node, 1.0 / r_branch[i])
    stamp(g_node, supply, 1.0 / resistance)
    sources = [(i, v[i]) for i in range(n)] + [(supply, -vdd)]
    for s, (node, volts) in enumerate(sources):
        row = nodes + s
        a[node, row] += 1.0
        a[row, node] += 1.0
        b[row] = volts
    return np.linalg.solve(a, b)[g_node]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_array(rng, n, m, vdd=1.0):
    return PixelArray(rng.uniform(0.0, vdd, size=(m, n, 3)), vdd)


@pytest.fixture
def small_cfg():
    return SensorConfig(8, 8, 2, "gray", circuit=CircuitParams())


ACCEPTANCE_LINES = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_criterion"):
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append(f"{status}  {name}  ({report.duration:.2f}s)")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
