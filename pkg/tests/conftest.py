import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thermistor_lab.discretization import Grid
from thermistor_lab.problem import DomainSpec, InitialCondition, ProblemSpec, SourceFunction

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def unit_interval():
    return DomainSpec.interval(1.0)


def make_spec(p=2.0, lam=1.0, source=None, u0=None, T=1.0, dim=1, extent=1.0):
    domain = DomainSpec(dim, (float(extent),) * dim)
    return ProblemSpec(p, lam, domain, source or SourceFunction.constant(),
                       u0 or InitialCondition("sine", 0.1), T)


def make_grid(spec, n):
    return Grid.uniform(spec.domain, n)


def random_interior(rng, shape, scale=1.0):
    return scale * rng.uniform(-1.0, 1.0, shape)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
