from __future__ import annotations

import math

import pytest

from nested_mzi import Experiment, ProbeRegister, ProbeSpec, default_nested_mzi


@pytest.fixture(scope="session")
def spec():
    return default_nested_mzi()


@pytest.fixture(scope="session")
def bare(spec):
    return Experiment(spec)


def register(spec, *probes):
    """``register(spec, ("b", "B", 0.1), ("w", "B+C", 0.1))``"""
    return ProbeRegister.build(
        spec, [ProbeSpec(name, tuple(t.split("+")), eps, spec.probe_slot) for name, t, eps in probes]
    )


QUARTER = math.pi / 4


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
