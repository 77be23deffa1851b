"""Consistent histories for the particle inside the interferometer.

A *framework* assigns to some slots a decomposition of the occupied channel
space into orthogonal channel-set projectors (missing channels are collected
into an automatic complement) and ends every history with a detector
projector.  Chain kets are obtained by alternating evolution with the
history's projectors; their Gram matrix is the decoherence matrix.  A
framework is consistent when every off-diagonal entry is at most
``tol * max(diagonal)``, and only then are probabilities handed out.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ChannelNotOccupiedAtSlot,
    FrameworkError,
    IncompatibleFrameworks,
    InconsistentFramework,
    NonCommutingProjectors,
    UnknownChannel,
    ZeroProbabilityCondition,
)
from .evolution import ZERO_CLAMP, Experiment
from .interferometer import InterferometerSpec

__all__ = [
    "ConsistencyReport",
    "DecoherenceMatrix",
    "Framework",
    "GuardEntry",
    "History",
    "ProjectorExpr",
    "Query",
    "chain_ket",
    "check_consistency",
    "conditional_distribution",
    "decoherence_matrix",
    "histories_report",
    "inference_guard",
    "parse_framework",
    "projector_of",
    "refine_frameworks",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class ProjectorExpr:
    """Sum of channel projectors at one slot.

    With ``complement=True`` the projector is onto the occupied channels at
    ``slot`` *not* in ``channels``.
    """

    slot: int
    channels: frozenset[str]
    complement: bool = False

    @classmethod
    def of(cls, slot: int, text: str) -> ProjectorExpr:
        return cls(slot, frozenset(n.strip() for n in text.split("+")))

    @property
    def label(self) -> str:
        body = "+".join(sorted(self.channels))
        return f"not({body})" if self.complement else body

    def __str__(self) -> str:
        return self.label


def channel_set(expr: ProjectorExpr, spec: InterferometerSpec) -> frozenset[str]:
    """Physical channels (live at the slot) spanned by ``expr``."""
    named = set()
    for name in expr.channels:
        named.add(spec.resolve(name, expr.slot))
    if expr.complement:
        return frozenset(c for c in spec.live_channels(expr.slot) if c not in named)
    return frozenset(named)


def projector_of(expr: ProjectorExpr, spec: InterferometerSpec) -> NDArray[np.float64]:
    """Projector on the particle's channel space.

    Raises:
        UnknownChannel: a name is not a channel of ``spec``.
        ChannelNotOccupiedAtSlot: a channel carries no amplitude at that slot.
    """
    diag = np.zeros(spec.n_channels)
    for c in channel_set(expr, spec):
        diag[spec.channel_index[c]] = 1.0
    return np.diag(diag)


@dataclass(frozen=True)
class History:
    events: tuple[ProjectorExpr, ...]
    detector: str
    bits: str | None = None

    @property
    def label(self) -> tuple[str, ...]:
        tail = (self.detector,) if self.bits is None else (self.detector, self.bits)
        return tuple(e.label for e in self.events) + tail


@dataclass(frozen=True)
class Framework:
    """Per-slot decompositions plus the final detector outcomes.

    ``resolve_probes`` additionally splits the final outcome by the probe
    readout.  Build through :meth:`build` or :func:`parse_framework`, which
    validate and add complements.
    """

    decompositions: tuple[tuple[int, tuple[ProjectorExpr, ...]], ...] = ()
    resolve_probes: bool = False
    name: str = field(default="", compare=False)

    @classmethod
    def build(cls, spec: InterferometerSpec, decompositions, resolve_probes: bool = False, name: str = ""):
        """``decompositions`` maps slot -> iterable of ``"B+C"`` strings or exprs."""
        out = []
        for slot in sorted(decompositions):
            if not 0 <= slot <= spec.final_slot:
                raise FrameworkError(f"slot {slot} outside 0..{spec.final_slot}")
            exprs = []
            for item in decompositions[slot]:
                expr = ProjectorExpr.of(slot, item) if isinstance(item, str) else item
                if expr.slot != slot:
                    raise FrameworkError(f"{expr} belongs to slot {expr.slot}, not {slot}")
                exprs.append(expr)
            out.append((slot, _complete(spec, slot, exprs)))
        return cls(tuple(out), resolve_probes, name)

    @classmethod
    def trivial(cls, name: str = "") -> Framework:
        return cls((), False, name)

    @property
    def slots(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.decompositions)

    def decomposition(self, slot: int) -> tuple[ProjectorExpr, ...]:
        for s, exprs in self.decompositions:
            if s == slot:
                return exprs
        raise FrameworkError(f"framework has no decomposition at slot {slot}")

    def histories(self, spec: InterferometerSpec, probes: tuple[str, ...] = ()) -> list[History]:
        finals: list[tuple[str, str | None]] = []
        for d in spec.detectors:
            if self.resolve_probes:
                finals.extend((d, format(k, f"0{len(probes)}b")[::-1]) for k in range(1 << len(probes)))
            else:
                finals.append((d, None))
        out = []
        for events in itertools.product(*(exprs for _, exprs in self.decompositions)):
            for det, bits in finals:
                out.append(History(tuple(events), det, bits))
        return out

    def describe(self) -> str:
        parts = [f"slot{s}:{{{', '.join(e.label for e in exprs if not e.complement)}}}" for s, exprs in self.decompositions]
        return "; ".join(parts + ["detector+probes" if self.resolve_probes else "detector"])


def _complete(spec: InterferometerSpec, slot: int, exprs: list[ProjectorExpr]) -> tuple[ProjectorExpr, ...]:
    seen: dict[str, ProjectorExpr] = {}
    for e in exprs:
        if e.complement:
            raise FrameworkError("complements are added automatically")
        if not e.channels:
            raise FrameworkError(f"empty projector at slot {slot}")
        for c in channel_set(e, spec):
            if c in seen:
                raise FrameworkError(f"{e} overlaps {seen[c]} at slot {slot}")
            seen[c] = e
    exprs = list(exprs)
    rest = [c for c in spec.live_channels(slot) if c not in seen]
    if rest:
        named = frozenset(n for e in exprs for n in e.channels)
        exprs.append(ProjectorExpr(slot, named, complement=True))
    return tuple(exprs)


_ITEM = re.compile(r"^\s*(?:(slot)\s*(\d+)|(probe))\s*:\s*\{([^}]*)\}\s*$")


def parse_framework(text: str, spec: InterferometerSpec, name: str = "", probe_slot: int | None = None) -> Framework:
    """Parse ``slot3:{A, B+C}; detector``.

    ``probe:{...}`` refers to the default probe slot; the trailing
    ``detector`` item is optional, ``detector+probes`` also splits the final
    outcome by probe readout.
    """
    decomp: dict[int, list[str]] = {}
    resolve = False
    for item in filter(None, (s.strip() for s in text.split(";"))):
        if item in ("detector", "detectors"):
            continue
        if item in ("detector+probes", "detectors+probes"):
            resolve = True
            continue
        m = _ITEM.match(item)
        if not m:
            raise FrameworkError(f"cannot parse framework item {item!r}")
        slot = int(m.group(2)) if m.group(1) else (spec.probe_slot if probe_slot is None else probe_slot)
        if slot in decomp:
            raise FrameworkError(f"slot {slot} given twice")
        members = [t.strip() for t in m.group(4).split(",") if t.strip()]
        if not members:
            raise FrameworkError(f"empty decomposition in {item!r}")
        for t in members:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*(\s*\+\s*[A-Za-z_][A-Za-z0-9_]*)*", t):
                raise FrameworkError(f"bad channel expression {t!r}")
        decomp[slot] = [re.sub(r"\s+", "", t) for t in members]
    return Framework.build(spec, decomp, resolve, name or text)


# ---------------------------------------------------------------------------
# chain kets and the decoherence matrix


def chain_ket(history: History, experiment: Experiment, initial: str | None = None) -> NDArray[np.complex128]:
    """Unnormalised chain ket; its squared norm is the history's weight."""
    spec, space = experiment.spec, experiment.space
    at = {e.slot: e for e in history.events}
    vec = experiment.initial_vector(initial)
    for slot in range(spec.n_slots):
        vec = experiment.step(vec, slot)
        if slot in at:
            keep = _mask(spec, channel_set(at[slot], spec))
            vec = vec * np.repeat(keep, space.probe_dim)
    det = experiment.detector_index(history.detector)
    out = np.zeros_like(vec)
    lo = det * space.probe_dim
    if history.bits is None:
        out[lo : lo + space.probe_dim] = vec[lo : lo + space.probe_dim]
    else:
        k = space.index(det, history.bits)
        out[k] = vec[k]
    return out


def _mask(spec: InterferometerSpec, channels) -> NDArray[np.float64]:
    keep = np.zeros(spec.n_channels)
    for c in channels:
        keep[spec.channel_index[c]] = 1.0
    return keep


@dataclass(frozen=True, eq=False)
class DecoherenceMatrix:
    """``matrix[i, j] = <chain(j) | chain(i)>`` over ``histories``."""

    histories: tuple[History, ...]
    matrix: NDArray[np.complex128]

    @property
    def diagonal(self) -> NDArray[np.float64]:
        return self.matrix.diagonal().real.copy()

    def index(self, label) -> int:
        label = tuple(label)
        for i, h in enumerate(self.histories):
            if h.label == label:
                return i
        raise KeyError(label)

    def entry(self, a, b) -> complex:
        return complex(self.matrix[self.index(a), self.index(b)])


def decoherence_matrix(framework: Framework, experiment: Experiment, initial: str | None = None) -> DecoherenceMatrix:
    hist = framework.histories(experiment.spec, experiment.register.names)
    kets = np.array([chain_ket(h, experiment, initial) for h in hist])
    gram = kets.conj() @ kets.T  # gram[j, i] = <chain j | chain i>
    return DecoherenceMatrix(tuple(hist), gram.T.copy())


@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    max_offdiag: float
    witness: tuple[tuple[str, ...], tuple[str, ...]] | None
    tol: float

    def to_dict(self) -> dict:
        return {
            "consistent": self.consistent,
            "max_offdiag": self.max_offdiag,
            "witness": [list(w) for w in self.witness] if self.witness else None,
        }


def check_consistency(dm: DecoherenceMatrix, tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """Medium consistency: ``|D(i, j)| <= tol * max_k D(k, k)`` for all ``i != j``.

    For an inconsistent matrix the witness is the first pair (row-major,
    ``i < j``) attaining the largest off-diagonal magnitude.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mag = np.abs(dm.matrix)
    np.fill_diagonal(mag, 0.0)
    n = mag.shape[0]
    if n < 2:
        return ConsistencyReport(True, 0.0, None, tol)
    iu = np.triu_indices(n, k=1)
    upper = mag[iu]
    worst = float(upper.max())
    scale = float(dm.diagonal.max(initial=0.0))
    consistent = worst <= tol * scale
    witness = None
    if not consistent:
        k = int(np.flatnonzero(upper >= worst * (1 - 1e-12))[0])
        i, j = iu[0][k], iu[1][k]
        witness = (dm.histories[i].label, dm.histories[j].label)
    return ConsistencyReport(consistent, worst, witness, tol)


def _require_consistent(dm: DecoherenceMatrix, tol: float, framework: Framework) -> None:
    rep = check_consistency(dm, tol)
    if not rep.consistent:
        raise InconsistentFramework(
            f"framework {framework.describe()!r} is inconsistent "
            f"(max off-diagonal {rep.max_offdiag:.6g}, witness {rep.witness}); "
            "no probabilities are assigned",
            rep.witness,
            rep.max_offdiag,
        )


def _detector_mass(dm: DecoherenceMatrix, given: str) -> float:
    det, _, bits = given.partition(":")
    return float(sum(p for h, p in zip(dm.histories, dm.diagonal) if _matches(h, det, bits or None)))


def _matches(h: History, det: str, bits: str | None) -> bool:
    if h.detector != det:
        return False
    return bits is None or h.bits == bits


def conditional_distribution(
    framework: Framework,
    given: str,
    experiment: Experiment,
    tol: float = DEFAULT_TOL,
    dm: DecoherenceMatrix | None = None,
) -> dict[ProjectorExpr, float]:
    """``Pr(expr at its slot | given)`` for every element of every decomposition.

    ``given`` is a detector name, or ``"D1:10"`` for a detector plus probe
    readout when the framework resolves probes.

    Raises:
        InconsistentFramework: the framework fails the consistency check.
        ZeroProbabilityCondition: ``given`` never happens.
    """
    dm = dm or decoherence_matrix(framework, experiment)
    _require_consistent(dm, tol, framework)
    det, _, bits = given.partition(":")
    if det not in experiment.spec.detectors:
        raise UnknownChannel(f"unknown detector {det!r}")
    norm = _detector_mass(dm, given)
    if norm <= ZERO_CLAMP:
        raise ZeroProbabilityCondition(f"Pr({given}) = 0")
    out: dict[ProjectorExpr, float] = {}
    for _, exprs in framework.decompositions:
        for e in exprs:
            out[e] = 0.0
    for h, p in zip(dm.histories, dm.diagonal):
        if _matches(h, det, bits or None):
            for e in h.events:
                out[e] += float(p) / norm
    return out


def conditional_table(
    framework: Framework, experiment: Experiment, tol: float = DEFAULT_TOL
) -> dict[str, dict[str, float]]:
    """Conditionals keyed by detector then label; impossible detectors are skipped."""
    dm = decoherence_matrix(framework, experiment)
    _require_consistent(dm, tol, framework)
    multi = len(framework.decompositions) > 1
    out = {}
    for d in experiment.spec.detectors:
        if _detector_mass(dm, d) <= ZERO_CLAMP:
            continue
        cond = conditional_distribution(framework, d, experiment, tol, dm)
        out[d] = {(f"slot{e.slot}:{e.label}" if multi else e.label): p for e, p in cond.items()}
    return out


# ---------------------------------------------------------------------------
# refinement and the single-framework rule


def refine_frameworks(
    f1: Framework, f2: Framework, experiment: Experiment, tol: float = DEFAULT_TOL
) -> Framework:
    """Common refinement of two frameworks, if they may be combined.

    Raises:
        NonCommutingProjectors: some pair of projectors at a slot does not commute.
        IncompatibleFrameworks: the refinement is not consistent.
    """
    spec = experiment.spec
    slots = sorted(set(f1.slots) | set(f2.slots))
    decomp: list[tuple[int, tuple[ProjectorExpr, ...]]] = []
    for slot in slots:
        a = f1.decomposition(slot) if slot in f1.slots else None
        b = f2.decomposition(slot) if slot in f2.slots else None
        if a is None or b is None:
            decomp.append((slot, a or b))
            continue
        originals = {channel_set(e, spec): e for e in (*b, *a)}
        exprs = []
        for p in a:
            pm = projector_of(p, spec)
            for q in b:
                qm = projector_of(q, spec)
                if np.max(np.abs(pm @ qm - qm @ pm)) > 1e-12:
                    raise NonCommutingProjectors(f"{p} and {q} do not commute at slot {slot}")
                common = channel_set(p, spec) & channel_set(q, spec)
                if not common:
                    continue
                if common in originals:
                    exprs.append(originals[common])
                else:
                    exprs.append(ProjectorExpr(slot, frozenset(spec.label(c) for c in common)))
        decomp.append((slot, tuple(exprs)))
    refined = Framework(tuple(decomp), f1.resolve_probes or f2.resolve_probes, f"{f1.name} & {f2.name}")
    rep = check_consistency(decoherence_matrix(refined, experiment), tol)
    if not rep.consistent:
        raise IncompatibleFrameworks(
            f"refinement {refined.describe()!r} is inconsistent "
            f"(max off-diagonal {rep.max_offdiag:.6g}, witness {rep.witness})",
            rep.witness,
            rep.max_offdiag,
        )
    return refined


@dataclass(frozen=True)
class Query:
    """``Pr(event at slot | given)`` asked inside a named framework."""

    framework: str
    event: str
    given: str
    slot: int | None = None

    def __str__(self) -> str:
        return f"{self.event} | {self.given} [{self.framework}]"


@dataclass(frozen=True)
class GuardEntry:
    request: tuple[Query, ...]
    status: str  # "answered" or "refused"
    value: float | None = None
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "request": " AND ".join(str(q) for q in self.request),
            "status": self.status,
            "value": self.value,
            "reason": self.reason,
        }


def _event_set(framework: Framework, q: Query, spec: InterferometerSpec) -> tuple[int, frozenset[str]]:
    slot = q.slot
    if slot is None:
        if len(framework.slots) != 1:
            raise FrameworkError(f"{q}: framework has several slots; give one")
        slot = framework.slots[0]
    for e in framework.decomposition(slot):
        if e.label == q.event or e.channels == ProjectorExpr.of(slot, q.event).channels and not e.complement:
            return slot, channel_set(e, spec)
    raise FrameworkError(f"{q.event!r} is not an element of {framework.describe()!r} at slot {slot}")


def inference_guard(
    frameworks: dict[str, Framework],
    requests,
    experiment: Experiment,
    tol: float = DEFAULT_TOL,
) -> list[GuardEntry]:
    """Answer queries while enforcing the single-framework rule.

    Each request is a :class:`Query` or a tuple of them (a conjunction).  A
    conjunction over several frameworks is answered only inside their common
    refinement; when none exists it is refused.  Refusals are returned, not
    raised.
    """
    spec = experiment.spec
    out = []
    for req in requests:
        req = (req,) if isinstance(req, Query) else tuple(req)
        try:
            givens = {q.given for q in req}
            if len(givens) != 1:
                raise FrameworkError("conjunction mixes different conditions")
            given = givens.pop()
            names = list(dict.fromkeys(q.framework for q in req))
            for n in names:
                if n not in frameworks:
                    raise FrameworkError(f"unknown framework {n!r}")
            fw = frameworks[names[0]]
            for n in names[1:]:
                try:
                    fw = refine_frameworks(fw, frameworks[n], experiment, tol)
                except (IncompatibleFrameworks, NonCommutingProjectors) as exc:
                    reason = (
                        f"single framework rule: {names[0]!r} and {n!r} cannot be combined ({exc})"
                    )
                    out.append(GuardEntry(req, "refused", None, reason))
                    break
            else:
                dm = decoherence_matrix(fw, experiment)
                _require_consistent(dm, tol, fw)
                events = [_event_set(frameworks[q.framework], q, spec) for q in req]
                det, _, bits = given.partition(":")
                norm = _detector_mass(dm, given)
                if norm <= ZERO_CLAMP:
                    raise ZeroProbabilityCondition(f"Pr({given}) = 0")
                hit = 0.0
                for h, p in zip(dm.histories, dm.diagonal):
                    if not _matches(h, det, bits or None):
                        continue
                    at = {e.slot: channel_set(e, spec) for e in h.events}
                    if all(at[s] <= chans for s, chans in events):
                        hit += p
                out.append(GuardEntry(req, "answered", float(hit) / norm))
        except (FrameworkError, ZeroProbabilityCondition, ChannelNotOccupiedAtSlot, UnknownChannel) as exc:
            out.append(GuardEntry(req, "refused", None, str(exc)))
    return out


def histories_report(framework: Framework, experiment: Experiment, tol: float = DEFAULT_TOL) -> dict:
    """Consistency verdict and, if consistent, conditionals for every detector."""
    dm = decoherence_matrix(framework, experiment)
    rep = check_consistency(dm, tol)
    out = {"framework": framework.describe(), **rep.to_dict()}
    if rep.consistent:
        out["conditionals"] = conditional_table(framework, experiment, tol)
    return out


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)
