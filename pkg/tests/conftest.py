import re
import time

import numpy as np
import pytest

import dccmkit as dk

from _dp_oracle import dp_geodesic_energy

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")

# endpoint pairs used for the path-space oracle comparison
DP_PAIRS = (
    ((0.0, 0.0), (1.0, 1.0)),
    ((-0.3, 0.8), (1.2, -0.2)),
    ((0.5, 0.5), (-0.4, 1.3)),
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run tests marked slow (long synthesis profiles)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per numbered acceptance criterion."""
    results = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = _CRITERION_RE.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            num = int(m.group(1))
            results[num] = results.get(num, True) and key == "passed"
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            verdict = "PASS" if results[num] else "FAIL"
            terminalreporter.write_line(f"criterion {num}: {verdict}")


@pytest.fixture(scope="session")
def cstr_sys():
    return dk.cstr()


@pytest.fixture(scope="session")
def cstr_cert(cstr_sys):
    """Degree-2 certificate for the reactor, shared across the suite."""
    template = dk.CertificateTemplate(2, 1, 2, 2, 0.1)
    return dk.synthesize(cstr_sys, template)


@pytest.fixture(scope="session")
def dp_results(cstr_cert):
    """Solver vs path-space-oracle energies for DP_PAIRS, with elapsed time."""
    from dccmkit.geodesic import _metrics_on

    metric_fn = lambda pts: _metrics_on(cstr_cert, pts)
    t0 = time.time()
    rows = []
    for pa, pb in DP_PAIRS:
        pa, pb = np.array(pa), np.array(pb)
        path = dk.compute_geodesic(cstr_cert, pa, pb, 30)
        oracle, _ = dp_geodesic_energy(metric_fn, pa, pb, 30)
        rows.append((path.energy, oracle))
    return {"rows": rows, "elapsed": time.time() - t0}
