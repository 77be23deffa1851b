"""Weak values under pre- and post-selection, and the weak-trace comparison.

The forward state at slot ``t`` is ``U(t, 0)|S>``; the backward state for a
detector ``Dk`` is ``U(T, t)^dagger |Dk>``.  The weak value of a channel
projector ``P`` is ``<back|P|fwd> / <back|fwd>``.  A channel is said to
carry a weak trace when ``|W| > threshold``.  Everything here is computed
with probes removed; the bridge numbers compare the weak values with the
exact trigger statistics of a weak probe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import InconsistentFramework, OrthogonalPostSelection
from .evolution import Experiment, joint_outcome_distribution
from .histories import (
    DEFAULT_TOL,
    Framework,
    ProjectorExpr,
    channel_set,
    check_consistency,
    conditional_distribution,
    decoherence_matrix,
)
from .interferometer import InterferometerSpec, compile_stages, propagator
from .probes import ProbeRegister, ProbeSpec

__all__ = [
    "TraceReport",
    "WeakTraceTable",
    "backward_state",
    "bridge_ratio",
    "compare_ch_weaktrace",
    "forward_state",
    "weak_trace_table",
    "weak_value",
]

ORTHOGONAL_TOL = 1e-12


def forward_state(spec: InterferometerSpec, slot: int) -> NDArray[np.complex128]:
    stages = compile_stages(spec)
    vec = np.zeros(spec.n_channels, dtype=np.complex128)
    vec[spec.channel_index[spec.source_channel]] = 1.0
    return propagator(stages, 0, slot) @ vec if stages else vec


def backward_state(spec: InterferometerSpec, slot: int, detector: str) -> NDArray[np.complex128]:
    stages = compile_stages(spec)
    vec = np.zeros(spec.n_channels, dtype=np.complex128)
    vec[spec.channel_index[spec.detector_channel(detector)]] = 1.0
    if not stages:
        return vec
    return propagator(stages, slot, spec.final_slot).conj().T @ vec


def _as_expr(expr, slot: int | None) -> ProjectorExpr:
    if isinstance(expr, ProjectorExpr):
        return expr
    if slot is None:
        raise ValueError("slot required when expr is a string")
    return ProjectorExpr.of(slot, expr)


def weak_value(spec: InterferometerSpec, expr, detector: str, slot: int | None = None) -> complex:
    """Weak value of ``expr`` (a :class:`ProjectorExpr` or ``"B+C"`` with ``slot``).

    Raises:
        OrthogonalPostSelection: the detector is never reached.
    """
    expr = _as_expr(expr, slot)
    fwd = forward_state(spec, expr.slot)
    back = backward_state(spec, expr.slot, detector)
    overlap = np.vdot(back, fwd)
    if abs(overlap) <= ORTHOGONAL_TOL:
        raise OrthogonalPostSelection(f"post-selection on {detector} has zero overlap with the source state")
    idx = [spec.channel_index[c] for c in channel_set(expr, spec)]
    return complex(np.vdot(back[idx], fwd[idx]) / overlap)


@dataclass(frozen=True)
class WeakEntry:
    slot: int
    label: str
    value: complex


@dataclass(frozen=True)
class WeakTraceTable:
    detector: str
    threshold: float
    entries: tuple[WeakEntry, ...]
    interior: tuple[int, int]

    def value(self, label: str, slot: int | None = None) -> complex:
        for e in self.entries:
            if e.label == label and (slot is None or e.slot == slot):
                return e.value
        raise KeyError(label)

    def _interior(self):
        lo, hi = self.interior
        return [e for e in self.entries if lo <= e.slot <= hi]

    @property
    def present(self) -> set[str]:
        return {e.label for e in self._interior() if abs(e.value) > self.threshold}

    @property
    def absent(self) -> set[str]:
        return {e.label for e in self._interior()} - self.present

    def to_dict(self) -> dict:
        return {
            "post": self.detector,
            "threshold": self.threshold,
            "weak_values": [
                {"slot": e.slot, "channel": e.label, "value": [e.value.real, e.value.imag]} for e in self.entries
            ],
            "present": sorted(self.present),
            "absent": sorted(self.absent),
        }


def weak_trace_table(
    spec: InterferometerSpec, detector: str, threshold: float = 1e-6, compounds=()
) -> WeakTraceTable:
    """Weak values of every occupied channel at every slot.

    ``compounds`` adds subspace projectors, either exprs or ``(slot, "B+C")``.
    Presence verdicts cover the interior slots, between the source and the
    detection slot.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    entries = []
    extra: dict[int, list[ProjectorExpr]] = {}
    for c in compounds:
        e = c if isinstance(c, ProjectorExpr) else ProjectorExpr.of(*c)
        extra.setdefault(e.slot, []).append(e)
    for slot in range(spec.n_slots):
        for ch in spec.live_channels(slot):
            label = spec.label(ch)
            entries.append(WeakEntry(slot, label, weak_value(spec, ProjectorExpr.of(slot, ch), detector)))
        for e in extra.get(slot, ()):
            entries.append(WeakEntry(slot, e.label, weak_value(spec, e, detector)))
    interior = (1, spec.final_slot - 1) if spec.final_slot >= 2 else (0, spec.final_slot)
    return WeakTraceTable(detector, threshold, tuple(entries), interior)


# ---------------------------------------------------------------------------
# bridge to probe statistics


def bridge_ratio(
    spec: InterferometerSpec, targets: tuple[str, ...], slot: int, detector: str, eps: float
) -> tuple[float, float]:
    """``(Pr(trigger | detector) / sin^2 eps, |W|^2)`` for one probe on ``targets``."""
    reg = ProbeRegister.build(spec, [ProbeSpec("x", targets, eps, slot)])
    dist = joint_outcome_distribution(Experiment(spec, reg).evolve())
    pd = dist.probability(detector)
    ratio = dist.probability(detector, x=1) / pd / math.sin(eps) ** 2
    w = weak_value(spec, ProjectorExpr(slot, frozenset(targets)), detector)
    return ratio, abs(w) ** 2


def dark_leakage(spec: InterferometerSpec, probe: ProbeSpec) -> dict:
    """Amplitude appearing on channels that are dark without probes.

    Only the untriggered sector is inspected, at the first slot after the
    probe where such amplitude shows up.  For a ``b`` probe in the default
    interferometer this is the ``E`` amplitude ``(1 - cos eps) / (2 sqrt 2)``.
    """
    reg = ProbeRegister.build(spec, [probe])
    states = Experiment(spec, reg).trajectory()
    for slot in range(probe.slot + 1, spec.n_slots):
        fwd = forward_state(spec, slot)
        m = states[slot].matrix()
        leak = {}
        for ch in spec.live_channels(slot):
            i = spec.channel_index[ch]
            if abs(fwd[i]) <= ORTHOGONAL_TOL and abs(m[i, 0]) > 1e-15:
                leak[spec.label(ch)] = complex(m[i, 0])
        if leak:
            return {"slot": slot, **leak}
    return {}


# ---------------------------------------------------------------------------
# comparison with consistent histories


@dataclass(frozen=True)
class Row:
    channel: str
    slot: int
    weak_value: complex
    weak_trace: str
    ch: str
    agree: bool

    @property
    def disputed(self) -> bool:
        return self.weak_trace == "present" and self.ch.startswith("absent")

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "slot": self.slot,
            "weak_value": [self.weak_value.real, self.weak_value.imag],
            "weak_trace": self.weak_trace,
            "ch": self.ch,
            "agree": self.agree,
            "disputed": self.disputed,
        }


@dataclass(frozen=True)
class TraceReport:
    post: str
    framework: str
    rows: tuple[Row, ...]
    bridge: tuple[dict, ...] = ()
    evidence: dict = field(default_factory=dict)

    def row(self, channel: str) -> Row:
        for r in self.rows:
            if r.channel == channel:
                return r
        raise KeyError(channel)

    def to_dict(self) -> dict:
        return {
            "post": self.post,
            "framework": self.framework,
            "rows": [r.to_dict() for r in self.rows],
            "bridge": list(self.bridge),
            "evidence": self.evidence,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_text(self) -> str:
        head = ("channel", "slot", "weak value", "weak trace", "consistent histories", "agree")
        body = [
            (
                r.channel,
                str(r.slot),
                _fmt_complex(r.weak_value),
                r.weak_trace,
                r.ch,
                ("yes" if r.agree else "NO") + ("  <- disputed" if r.disputed else ""),
            )
            for r in self.rows
        ]
        widths = [max(len(x[i]) for x in [head, *body]) for i in range(len(head))]
        lines = [f"post-selection {self.post}; framework {self.framework}", ""]
        for row in [head, *body]:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if self.bridge:
            lines += ["", "probe bridge: Pr(trigger|post)/sin^2(eps) vs |W|^2"]
            for b in self.bridge:
                lines.append(f"  {b['probe']:<8} eps={b['eps']:.3g}  ratio={b['ratio']:.9f}  |W|^2={b['weak_sq']:.9f}")
        for key, val in self.evidence.items():
            lines.append(f"{key}: {json.dumps(val)}")
        return "\n".join(lines) + "\n"


def _fmt_complex(z: complex) -> str:
    re_, im = (0.0 if abs(z.real) < 1e-15 else z.real), (0.0 if abs(z.imag) < 1e-15 else z.imag)
    if im == 0.0:
        return f"{re_:+.6f}"
    return f"{re_:+.6f}{im:+.6f}i"


def _ch_verdict(p: float, via: ProjectorExpr | None) -> str:
    word = "present" if p >= 1 - 1e-9 else "absent" if p <= 1e-9 else f"undetermined (p={p:.6g})"
    if via is not None and len(via.channels) > 1 and not word.startswith("undetermined"):
        return f"{word} (via {via.label})"
    return word


def compare_ch_weaktrace(
    spec: InterferometerSpec,
    detector: str,
    framework: Framework,
    eps_ref: float = 1e-3,
    threshold: float = 1e-6,
    tol: float = DEFAULT_TOL,
) -> TraceReport:
    """Channel-by-channel weak-trace and consistent-histories verdicts.

    Channels covered by the framework take their verdict from the element
    containing them.  Other channels are judged in the framework extended
    by the fine channel decomposition at the channel's first interior slot,
    provided that extension is consistent.

    Raises:
        InconsistentFramework: ``framework`` itself is inconsistent.
    """
    exp = Experiment(spec)
    dm = decoherence_matrix(framework, exp)
    rep = check_consistency(dm, tol)
    if not rep.consistent:
        raise InconsistentFramework(
            f"framework {framework.describe()!r} is inconsistent", rep.witness, rep.max_offdiag
        )
    cond = conditional_distribution(framework, detector, exp, tol, dm)
    compounds = [
        e for _, exprs in framework.decompositions for e in exprs if not e.complement and len(e.channels) > 1
    ]
    table = weak_trace_table(spec, detector, threshold, compounds)
    lo, hi = table.interior

    # first interior slot of each channel label, in slot then channel order
    first: dict[str, int] = {}
    for slot in range(lo, hi + 1):
        for ch in spec.live_channels(slot):
            first.setdefault(spec.label(ch), slot)

    rows = []
    for label, slot in first.items():
        live = [s for s in range(lo, hi + 1) if any(spec.label(c) == label for c in spec.live_channels(s))]
        covering = [s for s in live if s in framework.slots]
        if covering:
            s = covering[0]
            phys = spec.resolve(label, s)
            elem = next(e for e in framework.decomposition(s) if phys in channel_set(e, spec))
            verdict = _ch_verdict(cond[elem], elem)
        else:
            verdict = _extended_verdict(spec, exp, framework, label, slot, detector, tol)
        w = table.value(label, covering[0] if covering else slot)
        weak = "present" if abs(w) > threshold else "absent"
        rows.append(Row(label, covering[0] if covering else slot, w, weak, verdict, verdict.split()[0] == weak))
    for e in compounds:
        w = table.value(e.label, e.slot)
        weak = "present" if abs(w) > threshold else "absent"
        verdict = _ch_verdict(cond[e], None)
        rows.append(Row(e.label, e.slot, w, weak, verdict, verdict.split()[0] == weak))

    bridge = []
    evidence: dict = {}
    if framework.slots:
        pslot = framework.slots[0]
        targets = [(spec.label(c).lower(), (spec.label(c),)) for c in spec.live_channels(pslot)]
        for k, e in enumerate(compounds):
            if e.slot == pslot:
                targets.append(("w" if len(compounds) == 1 else f"w{k + 1}", tuple(sorted(e.channels))))
        for name, tg in targets:
            ratio, wsq = bridge_ratio(spec, tg, pslot, detector, eps_ref)
            bridge.append({
                "probe": name,
                "targets": "+".join(tg),
                "slot": pslot,
                "eps": eps_ref,
                "ratio": ratio,
                "weak_sq": wsq,
                "rel_err": abs(ratio - wsq) / wsq if wsq > 0 else abs(ratio - wsq),
            })
        for e in compounds:
            if cond[e] <= 1e-9:
                reg = ProbeRegister.build(spec, [ProbeSpec("w", tuple(sorted(e.channels)), eps_ref, e.slot)])
                dist = joint_outcome_distribution(Experiment(spec, reg).evolve())
                evidence[f"Pr(w[{e.label}]=1 and {detector})"] = dist.probability(detector, w=1)
        for r in rows:
            if r.disputed and "+" not in r.channel and r.slot <= pslot:
                leak = dark_leakage(spec, ProbeSpec(r.channel.lower(), (r.channel,), eps_ref, pslot))
                if leak:
                    evidence[f"untriggered {r.channel.lower()}-probe leakage at eps={eps_ref:g}"] = {
                        k: ([v.real, v.imag] if isinstance(v, complex) else v) for k, v in leak.items()
                    }
    return TraceReport(detector, framework.describe(), tuple(rows), tuple(bridge), evidence)


def _extended_verdict(spec, exp, framework, label, slot, detector, tol) -> str:
    fine = {s: [e for e in exprs if not e.complement] for s, exprs in framework.decompositions}
    fine[slot] = [spec.label(c) for c in spec.live_channels(slot)]
    ext = Framework.build(spec, fine, framework.resolve_probes)
    dm = decoherence_matrix(ext, exp)
    if not check_consistency(dm, tol).consistent:
        return "undetermined (no consistent extension)"
    cond = conditional_distribution(ext, detector, exp, tol, dm)
    elem = next(e for e in ext.decomposition(slot) if not e.complement and label in e.channels)
    return _ch_verdict(cond[elem], elem)
