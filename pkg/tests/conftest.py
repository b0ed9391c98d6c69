import numpy as np
import pytest


def random_spd(gen, p, cond=10.0):
    q, _ = np.linalg.qr(gen.standard_normal((p, p)))
    ev = np.exp(gen.uniform(0, np.log(cond), p))
    return q @ np.diag(ev) @ q.T


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            for name, value in getattr(rep, "user_properties", []):
                if name == "criterion":
                    lines.append((value[0], f"{'PASS' if rep.passed else 'FAIL'}  criterion {value[0]:>2}: {value[1]}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
