import math

import numpy as np
import pytest

from jumpflow import (ActionDomain, FlowContext, FrequencyField, ProductDensity, TransitionSchedule,
                      trig_observable)
from jumpflow.almostperiodic import quasiperiodic_generator

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
D1_LIMIT = 0.6 * 0.28 + 0.4 * 0.39


def d1_schedule():
    return TransitionSchedule(1.0, [0.0, 0.3, 0.7], [[0.0], [0.1], [-0.1]])


def twopi_field():
    return FrequencyField.linear([[2 * np.pi]])


def d1_context():
    return FlowContext(d1_schedule(), twopi_field())


def d1_observable():
    """``I^2 + I cos(theta)``."""
    return trig_observable(1, [([0], [0, 0, 1], None), ([1], [0, 1], None)], name="G")


def d1_density(kappa=0.0, mu=0.0):
    return ProductDensity(ActionDomain([0.2], [0.8]), kappa=kappa, mu=mu)


@pytest.fixture
def ctx():
    return d1_context()


@pytest.fixture
def G():
    return d1_observable()


@pytest.fixture
def f0():
    return d1_density()


@pytest.fixture
def f0_mod():
    """Angle-modulated variant whose oscillatory terms do not cancel at integer ``l``."""
    return d1_density(0.5, np.pi / 2)


@pytest.fixture
def ctx2():
    """Two degrees of freedom with a diagonal affine frequency field."""
    sched = TransitionSchedule(2.0, [0.0, 0.5, 1.2], [[0.0, 0.0], [0.05, -0.1], [-0.05, 0.1]])
    field = FrequencyField.linear(2 * np.pi * np.diag([1.0, 1.7]), 2 * np.pi * np.array([0.3, -0.2]))
    return FlowContext(sched, field)


@pytest.fixture
def d2_sequence():
    return quasiperiodic_generator([0.1], GOLDEN)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record ``CRITERION k: PASS|FAIL detail`` for the terminal summary and print it."""
    def record(number: int, passed: bool, detail: str):
        line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        return passed
    return record
