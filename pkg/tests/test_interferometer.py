from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pathsum
from nested_mzi.errors import (
    DanglingPort,
    DuplicateName,
    InvalidParameter,
    ItfSyntaxError,
    NoSource,
    NotADag,
    PortConflict,
    UnknownName,
)
from nested_mzi.interferometer import (
    StageUnitary,
    canonical_text,
    compile_stages,
    default_nested_mzi,
    format_itf,
    parse_chanexpr,
    parse_itf,
    propagator,
    validate_unitarity,
)

S2 = 1 / math.sqrt(2)


def drop_line(text, prefix):
    lines = text.splitlines()
    kept = [ln for ln in lines if not ln.strip().startswith(prefix)]
    assert len(kept) == len(lines) - 1
    return "\n".join(kept) + "\n"


def replace_line(text, prefix, new):
    return "\n".join(new if ln.strip().startswith(prefix) else ln for ln in text.splitlines()) + "\n"


class TestParse:
    def test_canonical_contents(self, spec):
        assert set(spec.channel_names) == set("S D A0 A B0 B C C2 E H G F".split())
        assert len(spec.beamsplitters) == 4
        assert len(spec.mirrors) == 3
        assert spec.detectors == ("D1", "D2", "D3")

    def test_detector_channels(self, spec):
        assert {d: spec.detector_channel(d) for d in spec.detectors} == {"D1": "F", "D2": "G", "D3": "H"}

    def test_slots(self, spec):
        assert spec.n_slots == 6
        assert spec.slots["SRC"] == 0
        assert spec.slots["BS1"] == spec.slots["M1"] == 1
        assert spec.slots["BS2"] == spec.slots["M2"] == spec.slots["M3"] == 2
        assert spec.probe_slot == 3
        assert spec.nodes_at(3) == ()
        assert spec.slots["BS3"] == 4
        assert spec.slots["BS4"] == spec.slots["D1"] == 5

    def test_probe_slot_occupancy(self, spec):
        assert set(spec.live_labels(spec.probe_slot)) == {"A", "B", "C"}

    def test_deterministic(self):
        assert parse_itf(canonical_text()) == parse_itf(canonical_text())

    def test_round_trip(self, spec):
        again = parse_itf(format_itf(spec))
        assert again == spec
        assert format_itf(again) == format_itf(spec)

    def test_comments_and_blank_lines(self):
        text = "# header\n\n" + canonical_text().replace("\n", "   # trailing\n", 3)
        assert parse_itf(text) == default_nested_mzi()

    def test_probe_lines(self):
        s = parse_itf(canonical_text() + "probe b on B eps 0.1 slot 3\nprobe w on B+C eps 0.1\n")
        assert [(p.name, p.targets, p.eps) for p in s.probes] == [("b", ("B",), 0.1), ("w", ("B", "C"), 0.1)]
        assert parse_itf(format_itf(s)) == s

    def test_phi(self):
        s = parse_itf(canonical_text().replace("bs BS3 theta 0.7853981633974483", "bs BS3 theta 0.7853981633974483 phi 1.5"))
        assert s.node["BS3"].phi == 1.5

    @pytest.mark.parametrize(
        "text",
        ["chan A+", "chan +B", "chan B++C", "chan B C"],
    )
    def test_bad_chanexpr_module(self, text):
        with pytest.raises(ItfSyntaxError):
            parse_chanexpr(text.removeprefix("chan "))

    def test_chanexpr(self):
        assert parse_chanexpr("B+C") == ("B", "C")
        assert parse_chanexpr(" A ") == ("A",)


MUTATIONS = {
    "dangling port": (lambda t: drop_line(t, "chan E:"), DanglingPort),
    "duplicate name": (lambda t: t + "mirror M1\n", DuplicateName),
    "cycle": (
        lambda t: t + "mirror MX\nmirror MY\nchan X1: MX.out1 -> MY.in1\nchan X2: MY.out1 -> MX.in1\n",
        NotADag,
    ),
    "missing source": (lambda t: drop_line(drop_line(t, "source"), "chan S:"), NoSource),
    "bad float": (lambda t: t.replace("bs BS2 theta 0.7853981633974483", "bs BS2 theta 0.78.5"), ItfSyntaxError),
    "unknown keyword": (lambda t: t + "lens L1\n", ItfSyntaxError),
    "unconnected detector": (lambda t: t + "detector D4\n", DanglingPort),
    "double-connected port": (lambda t: t.replace("chan G: BS4.out1", "chan G: BS4.out2"), PortConflict),
    "bad CHANEXPR": (lambda t: t + "probe b on B+ eps 0.1\n", ItfSyntaxError),
    "empty file": (lambda t: "", NoSource),
}


@pytest.mark.parametrize("case", sorted(MUTATIONS))
def test_mutation(case):
    mutate, error = MUTATIONS[case]
    with pytest.raises(error):
        parse_itf(mutate(canonical_text()))


def test_dangling_port_names_port():
    with pytest.raises(DanglingPort) as info:
        parse_itf(drop_line(canonical_text(), "chan E:"))
    assert info.value.port == "BS3.out2"
    assert "BS3.out2" in str(info.value)


def test_syntax_error_location():
    text = canonical_text().replace("bs BS2 theta 0.7853981633974483", "bs BS2 theta zz")
    with pytest.raises(ItfSyntaxError) as info:
        parse_itf(text)
    line = next(i for i, ln in enumerate(text.splitlines(), 1) if "theta zz" in ln)
    assert info.value.line == line
    assert info.value.column is not None


@pytest.mark.parametrize("theta", ["-0.1", "1.6", "nan"])
def test_theta_range(theta):
    with pytest.raises((InvalidParameter, ItfSyntaxError)):
        parse_itf(canonical_text().replace("bs BS1 theta 0.7853981633974483", f"bs BS1 theta {theta}"))


def test_unknown_node():
    with pytest.raises(UnknownName):
        parse_itf(canonical_text().replace("chan S: SRC.out1", "chan S: SRCX.out1"))


def test_probe_target_must_exist():
    with pytest.raises(Exception):
        parse_itf(canonical_text() + "probe z on Q eps 0.1\n")


class TestStages:
    def test_count_and_unitarity(self, spec):
        stages = compile_stages(spec)
        assert [st.slot for st in stages] == [1, 2, 3, 4, 5]
        assert validate_unitarity(stages, 1e-12).passed

    def test_bs1_block(self, spec):
        st = compile_stages(spec)[0]
        i = spec.channel_index
        # M1 shares the slot, so the reflected wave is already on A
        assert st.matrix[i["D"], i["S"]] == pytest.approx(S2)
        assert st.matrix[i["A"], i["S"]] == pytest.approx(1j * S2)
        assert spec.resolve("A", 1) == "A"

    def test_theta_zero_is_identity_on_ports(self, spec):
        s = spec.with_params({"BS1.theta": 0.0})
        st = compile_stages(s)[0]
        i = s.channel_index
        assert st.matrix[i["D"], i["S"]] == pytest.approx(1.0)
        assert abs(st.matrix[i["A"], i["S"]]) < 1e-15

    def test_probe_slot_idle(self, spec):
        st = compile_stages(spec)[2]
        assert st.slot == 3
        assert np.allclose(st.matrix, np.eye(spec.n_channels))

    def test_inner_tuning(self, spec):
        stages = compile_stages(spec)
        u = propagator(stages, 1, 4)
        i = spec.channel_index
        assert abs(u[i["E"], i["D"]]) <= 1e-12
        assert abs(abs(u[i["H"], i["D"]]) - 1) <= 1e-12

    def test_source_maps_to_detectors(self, spec):
        u = propagator(compile_stages(spec), 0, spec.final_slot)
        col = u[:, spec.channel_index["S"]]
        det = [spec.channel_index[c] for c in "FGH"]
        assert np.sum(np.abs(col[det]) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_final_amplitudes_match_oracle(self, spec):
        u = propagator(compile_stages(spec), 0, spec.final_slot)
        col = u[:, spec.channel_index["S"]]
        for ch, amp in pathsum.final_amplitudes().items():
            assert abs(col[spec.channel_index[ch]] - amp) < 1e-12
        assert abs(col[spec.channel_index["F"]] + 0.5) < 1e-12
        assert abs(col[spec.channel_index["G"]] - 0.5j) < 1e-12
        assert abs(col[spec.channel_index["H"]] - 1j * S2) < 1e-12


class TestValidateUnitarity:
    def perturbed(self, spec):
        stages = compile_stages(spec)
        m = stages[1].matrix.copy()
        m[0, 0] += 1e-6
        return [*stages[:1], StageUnitary(stages[1].slot, m, stages[1].nodes), *stages[2:]]

    def test_fail_reports_slot(self, spec):
        rep = validate_unitarity(self.perturbed(spec), 1e-12)
        assert not rep.passed
        assert rep.offending == [2]

    def test_loose_tolerance_passes(self, spec):
        assert validate_unitarity(self.perturbed(spec), 1e-3).passed

    def test_rejects_nonpositive_tol(self, spec):
        with pytest.raises(ValueError):
            validate_unitarity(compile_stages(spec), 0.0)


angles = st.floats(0.0, math.pi / 2)
phases = st.floats(-math.pi, math.pi)


@settings(max_examples=40, deadline=None)
@given(st.tuples(angles, angles, angles, angles), st.tuples(phases, phases, phases, phases))
def test_stages_unitary_and_match_oracle(thetas, phis):
    params = {}
    for k, (t, p) in enumerate(zip(thetas, phis), 1):
        params[f"BS{k}.theta"] = t
        params[f"BS{k}.phi"] = p
    s = default_nested_mzi().with_params(params)
    stages = compile_stages(s)
    assert validate_unitarity(stages, 1e-12).passed
    col = propagator(stages, 0, s.final_slot)[:, s.channel_index["S"]]
    for ch, amp in pathsum.final_amplitudes(thetas, phis).items():
        assert abs(col[s.channel_index[ch]] - amp) < 1e-12


def test_product_preserves_norm(spec):
    rng = np.random.default_rng(7)
    u = propagator(compile_stages(spec), 0, spec.final_slot)
    vecs = rng.normal(size=(1000, spec.n_channels)) + 1j * rng.normal(size=(1000, spec.n_channels))
    out = vecs @ u.T
    assert np.max(np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(vecs, axis=1)) / np.linalg.norm(vecs, axis=1)) < 1e-12
