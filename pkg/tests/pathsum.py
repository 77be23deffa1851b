"""Brute-force path-sum oracle for the nested interferometer.

Written against the optical layout only.  It does not import the package.
Every source-to-detector path is enumerated, 2x2 beamsplitter coefficients
are multiplied along it, and the amplitudes are summed per outcome.

Beamsplitter coefficients (t = cos theta, r = sin theta):

    in1 -> out1: t            in2 -> out1: i r
    in1 -> out2: e^{i phi} i r    in2 -> out2: e^{i phi} t

Layout: S -> BS1.in1; BS1.out1 = D, BS1.out2 = A; D -> BS2.in1;
BS2.out1 = C, BS2.out2 = B; B -> BS3.in1, C -> BS3.in2; BS3.out1 = H,
BS3.out2 = E; A -> BS4.in1, E -> BS4.in2; BS4.out1 = G, BS4.out2 = F;
F -> D1, G -> D2, H -> D3.  Mirrors contribute a factor 1.
"""

from __future__ import annotations

import cmath
import itertools
import math

QUARTER = math.pi / 4
DETECTOR_OF = {"F": "D1", "G": "D2", "H": "D3"}


def _bs(theta, phi):
    t, r = math.cos(theta), math.sin(theta)
    ph = cmath.exp(1j * phi)
    return {("in1", "out1"): t, ("in2", "out1"): 1j * r, ("in1", "out2"): ph * 1j * r, ("in2", "out2"): ph * t}


def edges(theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """Single-step amplitudes ``(from, to) -> coefficient``."""
    b1, b2, b3, b4 = (_bs(t, p) for t, p in zip(theta, phi))
    return {
        ("S", "D"): b1["in1", "out1"],
        ("S", "A"): b1["in1", "out2"],
        ("D", "C"): b2["in1", "out1"],
        ("D", "B"): b2["in1", "out2"],
        ("B", "H"): b3["in1", "out1"],
        ("C", "H"): b3["in2", "out1"],
        ("B", "E"): b3["in1", "out2"],
        ("C", "E"): b3["in2", "out2"],
        ("A", "G"): b4["in1", "out1"],
        ("E", "G"): b4["in2", "out1"],
        ("A", "F"): b4["in1", "out2"],
        ("E", "F"): b4["in2", "out2"],
    }


def paths():
    """All eight source -> exit paths."""
    out = [("S", "A", "F"), ("S", "A", "G")]
    for mid in ("B", "C"):
        out.append(("S", "D", mid, "H"))
        out += [("S", "D", mid, "E", "F"), ("S", "D", mid, "E", "G")]
    return out


def path_amplitude(path, e):
    amp = 1 + 0j
    for a, b in zip(path, path[1:]):
        amp *= e[a, b]
    return amp


def arm(path):
    """The A/B/C channel a path occupies at the probe slot."""
    return next(c for c in path if c in "ABC")


def outcome_probabilities(probes=(), theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """``{(detector, bits): probability}``; ``probes`` is ``[(targets, eps), ...]``.

    A probe whose target set contains the path's arm picks up
    ``cos eps |0> + sin eps |1>``; otherwise it stays in ``|0>``.
    """
    e = edges(theta, phi)
    amps = {}
    for bits in itertools.product("01", repeat=len(probes)):
        bits = "".join(bits)
        for det in ("D1", "D2", "D3"):
            amps[det, bits] = 0j
        for path in paths():
            amp = path_amplitude(path, e)
            for (targets, eps), bit in zip(probes, bits):
                if arm(path) in targets:
                    amp *= math.cos(eps) if bit == "0" else math.sin(eps)
                elif bit == "1":
                    amp = 0j
            amps[DETECTOR_OF[path[-1]], bits] += amp
    return {k: abs(v) ** 2 for k, v in amps.items()}


def final_amplitudes(theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """Probe-free amplitudes on F, G, H."""
    e = edges(theta, phi)
    out = {"F": 0j, "G": 0j, "H": 0j}
    for path in paths():
        out[path[-1]] += path_amplitude(path, e)
    return out


def _prefix(channel, e):
    """Forward amplitude of ``channel`` (sum over paths from S)."""
    total = 0j
    seen = set()
    for path in paths():
        if channel in path:
            head = path[: path.index(channel) + 1]
            if head not in seen:
                seen.add(head)
                total += path_amplitude(head, e)
    return total


def _suffix(channel, exit_channel, e):
    """Amplitude from ``channel`` to ``exit_channel``."""
    total = 0j
    seen = set()
    for path in paths():
        if channel in path and path[-1] == exit_channel:
            tail = path[path.index(channel):]
            if tail not in seen:
                seen.add(tail)
                total += path_amplitude(tail, e)
    return total


def forward_amplitudes(channels, theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    e = edges(theta, phi)
    return {c: _prefix(c, e) for c in channels}


def history_amplitude(channels, detector, theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """Chain amplitude of "particle in ``channels`` (one time), then ``detector``"."""
    e = edges(theta, phi)
    exit_ch = {v: k for k, v in DETECTOR_OF.items()}[detector]
    return sum(_prefix(c, e) * _suffix(c, exit_ch, e) for c in channels)


def weak_value(channels, detector, theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """Weak value of the projector on ``channels`` given post-selection on ``detector``.

    ``channels`` must belong to one time cut, e.g. ``{"A", "B", "C"}`` or ``{"D", "A"}``.
    """
    exit_ch = {v: k for k, v in DETECTOR_OF.items()}[detector]
    total = final_amplitudes(theta, phi)[exit_ch]
    return history_amplitude(channels, detector, theta, phi) / total


def decoherence_entries(decomposition, theta=(QUARTER,) * 4, phi=(0.0,) * 4):
    """``{((X, Dk), (Y, Dl)): D}`` for a probe-slot decomposition of {A, B, C}.

    Histories ending at different detectors are orthogonal.
    """
    amp = {
        (x, d): history_amplitude(set(x.split("+")), d, theta, phi)
        for x in decomposition
        for d in ("D1", "D2", "D3")
    }
    return {
        (h1, h2): (amp[h1] * amp[h2].conjugate() if h1[1] == h2[1] else 0j)
        for h1 in amp
        for h2 in amp
    }
