from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathsum
from conftest import register
from nested_mzi import (
    Experiment,
    conditional_given_probe,
    detector_distribution,
    evolve,
    joint_outcome_distribution,
)
from nested_mzi.errors import UnknownProbe, ZeroProbabilityCondition

S2 = 1 / math.sqrt(2)
PROBES = {"a": "A", "b": "B", "c": "C", "w": "B+C"}


def dist_for(spec, *probes):
    reg = register(spec, *probes)
    return joint_outcome_distribution(Experiment(spec, reg).evolve())


def test_final_amplitudes(spec):
    st_ = evolve(spec)
    amps = st_.particle_amplitudes()
    assert abs(amps["F"] + 0.5) < 1e-12
    assert abs(amps["G"] - 0.5j) < 1e-12
    assert abs(amps["H"] - 1j * S2) < 1e-12


def test_eps_zero_tensor_vacuum(spec):
    reg = register(spec, ("b", "B", 0.0), ("w", "B+C", 0.0))
    m = Experiment(spec, reg).evolve().matrix()
    assert np.allclose(m[:, 1:], 0)
    assert np.allclose(m[:, 0], evolve(spec).amplitudes)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_b_trigger_amplitude_on_f(spec, eps):
    st_ = Experiment(spec, register(spec, ("b", "B", eps))).evolve()
    assert abs(st_.amplitude("F", "1") - (-math.sin(eps) / 4)) < 1e-12


@pytest.mark.parametrize(
    "params, expected",
    [
        ({}, {"D1": 0.25, "D2": 0.25, "D3": 0.5}),
        ({"BS1.theta": 0.0}, {"D1": 0.0, "D2": 0.0, "D3": 1.0}),
        ({"BS1.theta": math.pi / 2}, {"D1": 0.5, "D2": 0.5, "D3": 0.0}),
    ],
)
def test_detector_distribution(spec, params, expected):
    got = detector_distribution(evolve(spec.with_params(params)))
    assert got == pytest.approx(expected, abs=1e-12)


def test_b_probe_d1_trigger(spec):
    d = dist_for(spec, ("b", "B", 0.1))
    assert d[("D1", "1")] == pytest.approx(math.sin(0.1) ** 2 / 16, abs=1e-15)
    assert d[("D1", "1")] == pytest.approx(6.2292e-4, rel=1e-4)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3, 1.0])
def test_w_probe_null_and_rate(spec, eps):
    d = dist_for(spec, ("w", "B+C", eps))
    assert d.probability("D1", w=1) <= 1e-15
    assert d.probability("D3", w=1) / d.probability("D3") == pytest.approx(math.sin(eps) ** 2, abs=1e-10)


@pytest.mark.parametrize("eps", [0.01, 0.1, 0.3, 1.2])
def test_condition_b1(spec, eps):
    cond = conditional_given_probe(dist_for(spec, ("b", "B", eps)), "b", 1)
    assert cond == pytest.approx({"D1": 0.25, "D2": 0.25, "D3": 0.5}, abs=1e-10)


def test_condition_b0(spec):
    eps = 0.1
    d = dist_for(spec, ("b", "B", eps))
    p0 = d.probability(b=0)
    want = abs(-0.5 + (1 - math.cos(eps)) / 4) ** 2 / p0
    assert conditional_given_probe(d, "b", 0)["D1"] == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.2494, abs=5e-5)
    assert p0 == pytest.approx(0.9975, abs=5e-5)


def test_condition_zero_probability(spec):
    with pytest.raises(ZeroProbabilityCondition):
        conditional_given_probe(dist_for(spec, ("w", "B+C", 0.0)), "w", 1)


def test_unknown_probe(spec):
    with pytest.raises(UnknownProbe):
        conditional_given_probe(dist_for(spec, ("b", "B", 0.1)), "z", 1)


def test_json(spec):
    d = dist_for(spec, ("b", "B", 0.1))
    out = d.to_dict()
    assert out["total_p"] == pytest.approx(1.0, abs=1e-12)
    assert out["outcomes"][0].keys() == {"detector", "bits", "p"}
    assert len(out["outcomes"]) == 6


SUBSETS = [c for r in range(5) for c in itertools.combinations("abcw", r)]


@pytest.mark.parametrize("names", SUBSETS, ids=lambda n: "".join(n) or "none")
@pytest.mark.parametrize("eps", [0.0, 0.05, 0.1, 0.3])
def test_oracle_equivalence(spec, names, eps):
    d = dist_for(spec, *((n, PROBES[n], eps) for n in names))
    oracle = pathsum.outcome_probabilities([(set(PROBES[n].split("+")), eps) for n in names])
    assert set(oracle) == set(d.cells)
    for cell, p in oracle.items():
        assert abs(d[cell] - p) <= 1e-10


angle = st.floats(0.0, math.pi / 2)
phase = st.floats(-math.pi, math.pi)


@settings(max_examples=30, deadline=None)
@given(
    st.tuples(angle, angle, angle, angle),
    st.tuples(phase, phase, phase, phase),
    st.lists(st.sampled_from("abcw"), unique=True, max_size=4),
    st.floats(0.0, math.pi / 2),
)
def test_oracle_equivalence_random(thetas, phis, names, eps):
    from nested_mzi import default_nested_mzi

    params = {f"BS{k}.theta": t for k, t in enumerate(thetas, 1)}
    params |= {f"BS{k}.phi": p for k, p in enumerate(phis, 1)}
    spec = default_nested_mzi().with_params(params)
    d = dist_for(spec, *((n, PROBES[n], eps) for n in names))
    oracle = pathsum.outcome_probabilities([(set(PROBES[n].split("+")), eps) for n in names], thetas, phis)
    for cell, p in oracle.items():
        assert abs(d[cell] - p) <= 1e-10
    assert abs(d.total - 1) <= 1e-10
    assert np.all(d.probs >= 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, math.pi / 2), min_size=4, max_size=4))
def test_norm_every_slot(eps):
    from nested_mzi import default_nested_mzi

    spec = default_nested_mzi()
    reg = register(spec, *((n, PROBES[n], e) for n, e in zip("abcw", eps)))
    for state in Experiment(spec, reg).trajectory():
        assert abs(state.norm - 1) <= 1e-12


@pytest.mark.parametrize("name", ["a", "b", "c"])
@pytest.mark.parametrize("det", ["D1", "D2", "D3"])
def test_bridge_law(spec, name, det):
    eps = 1e-3
    d = dist_for(spec, (name, PROBES[name], eps))
    ratio = d.probability(det, **{name: 1}) / d.probability(det) / math.sin(eps) ** 2
    w2 = abs(pathsum.weak_value({PROBES[name]}, det)) ** 2
    assert ratio == pytest.approx(w2, rel=1e-3, abs=1e-12)
