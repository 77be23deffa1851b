"""Interferometer descriptions.

A description is a small line-oriented text format (``.itf``)::

    source SRC
    bs BS1 theta 0.7853981633974483
    mirror M1
    detector D1
    chan S: SRC.out1 -> BS1.in1
    probe b on B eps 0.1 slot 3

Parsing yields an :class:`InterferometerSpec`, a validated directed acyclic
graph of optical elements joined by named channels.  Every node gets a time
slot (longest-path rank from the source, mirrors sharing the slot of the
element feeding them, detectors on the final slot), and
:func:`compile_stages` turns each slot into a unitary on the channel basis.

Beamsplitter convention, with ``c = cos(theta)`` and ``s = sin(theta)``::

    out1 = c * in1 + i s * in2
    out2 = exp(i phi) * (i s * in1 + c * in2)

Mirrors have coefficient 1.  An unconnected beamsplitter input is a vacuum
port.
"""

from __future__ import annotations

import graphlib
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ChannelNotOccupiedAtSlot,
    DanglingPort,
    DuplicateName,
    InvalidParameter,
    ItfSyntaxError,
    NoSource,
    NotADag,
    PortConflict,
    UnknownChannel,
    UnknownName,
)

__all__ = [
    "ChannelSpec",
    "InterferometerSpec",
    "NodeSpec",
    "Port",
    "ProbeDecl",
    "StageUnitary",
    "UnitarityReport",
    "build_spec",
    "canonical_text",
    "compile_stages",
    "default_nested_mzi",
    "format_itf",
    "node_unitary",
    "parse_itf",
    "propagator",
    "validate_unitarity",
]

# (input ports, output ports) per node kind
PORTS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "source": ((), ("out1",)),
    "beamsplitter": (("in1", "in2"), ("out1", "out2")),
    "mirror": (("in1",), ("out1",)),
    "detector": (("in1",), ()),
}

_KEYWORD_KIND = {"source": "source", "bs": "beamsplitter", "mirror": "mirror", "detector": "detector"}


@dataclass(frozen=True)
class Port:
    node: str
    name: str

    def __str__(self) -> str:
        return f"{self.node}.{self.name}"


@dataclass(frozen=True)
class NodeSpec:
    name: str
    kind: str
    theta: float = 0.0
    phi: float = 0.0


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    src: Port
    dst: Port


@dataclass(frozen=True)
class ProbeDecl:
    """A probe line as written; validated against slots by the probes module."""

    name: str
    targets: tuple[str, ...]
    eps: float
    slot: int | None = None


@dataclass(frozen=True)
class InterferometerSpec:
    """Validated interferometer topology.

    Build with :func:`parse_itf` or :func:`build_spec`; the constructor does
    not validate.  ``slots`` maps node name to its time slot.
    """

    nodes: tuple[NodeSpec, ...]
    channels: tuple[ChannelSpec, ...]
    probes: tuple[ProbeDecl, ...] = ()
    slots: dict[str, int] = field(default_factory=dict)

    __hash__ = None  # type: ignore[assignment]

    def __str__(self) -> str:
        return format_itf(self)

    # -- lookups -----------------------------------------------------------

    @cached_property
    def node(self) -> dict[str, NodeSpec]:
        return {n.name: n for n in self.nodes}

    @cached_property
    def channel(self) -> dict[str, ChannelSpec]:
        return {c.name: c for c in self.channels}

    @cached_property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    @cached_property
    def channel_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.channel_names)}

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @cached_property
    def source(self) -> str:
        return next(n.name for n in self.nodes if n.kind == "source")

    @cached_property
    def source_channel(self) -> str:
        return next(c.name for c in self.channels if c.src.node == self.source)

    @cached_property
    def detectors(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.kind == "detector")

    @cached_property
    def beamsplitters(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.kind == "beamsplitter")

    @cached_property
    def mirrors(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.kind == "mirror")

    def detector_channel(self, detector: str) -> str:
        for c in self.channels:
            if c.dst.node == detector:
                return c.name
        raise UnknownName(f"no detector named {detector!r}")

    @cached_property
    def _port_channel(self) -> dict[Port, str]:
        out = {}
        for c in self.channels:
            out[c.src] = c.name
            out[c.dst] = c.name
        return out

    def port_channel(self, node: str, port: str) -> str | None:
        return self._port_channel.get(Port(node, port))

    # -- time slots ----------------------------------------------------------

    @property
    def final_slot(self) -> int:
        return max((s for n, s in self.slots.items() if self.node[n].kind != "detector"), default=0)

    @property
    def n_slots(self) -> int:
        return self.final_slot + 1

    def nodes_at(self, slot: int) -> tuple[str, ...]:
        """Non-detector nodes acting at ``slot``, in topological order."""
        return tuple(
            n for n in self.topological_order
            if self.slots[n] == slot and self.node[n].kind not in ("source", "detector")
        )

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        return _topological_order(self.nodes, self.channels)

    @cached_property
    def idle_slots(self) -> tuple[int, ...]:
        """Interior slots with no optical element; natural places for probes."""
        return tuple(s for s in range(1, self.final_slot) if not self.nodes_at(s))

    @property
    def probe_slot(self) -> int:
        """Default slot for probes: the first idle slot, else the last interior one."""
        if self.idle_slots:
            return self.idle_slots[0]
        return max(self.final_slot - 1, 0)

    def live_range(self, channel: str) -> tuple[int, int]:
        """Inclusive slot range during which ``channel`` can carry amplitude.

        Channels internal to one slot (beamsplitter into same-slot mirror)
        have an empty range, ``first > last``.
        """
        c = self.channel[channel]
        first = self.slots[c.src.node]
        if self.node[c.dst.node].kind == "detector":
            last = self.final_slot
        else:
            last = self.slots[c.dst.node] - 1
        return first, last

    def is_live(self, channel: str, slot: int) -> bool:
        first, last = self.live_range(channel)
        return first <= slot <= last

    def live_channels(self, slot: int) -> tuple[str, ...]:
        return tuple(c for c in self.channel_names if self.is_live(c, slot))

    # -- mirror segments -----------------------------------------------------

    @cached_property
    def segments(self) -> tuple[tuple[str, ...], ...]:
        """Channels chained through mirrors, in declaration order."""
        parent = {c: c for c in self.channel_names}

        def find(c: str) -> str:
            while parent[c] != c:
                c = parent[c]
            return c

        for m in self.mirrors:
            a = self.port_channel(m, "in1")
            b = self.port_channel(m, "out1")
            parent[find(b)] = find(a)
        groups: dict[str, list[str]] = {}
        for c in self.channel_names:
            groups.setdefault(find(c), []).append(c)
        return tuple(tuple(g) for g in groups.values())

    @cached_property
    def _segment_of(self) -> dict[str, tuple[str, ...]]:
        return {c: seg for seg in self.segments for c in seg}

    def label(self, channel: str) -> str:
        """Display name of the mirror segment holding ``channel`` (its shortest member name)."""
        seg = self._segment_of[channel]
        return min(seg, key=lambda c: (len(c), self.channel_index[c]))

    def resolve(self, name: str, slot: int) -> str:
        """Map a channel name to the member of its mirror segment live at ``slot``."""
        if name not in self._segment_of:
            raise UnknownChannel(f"unknown channel {name!r}")
        for c in self._segment_of[name]:
            if self.is_live(c, slot):
                return c
        raise ChannelNotOccupiedAtSlot(f"channel {name!r} is not occupied at slot {slot}")

    def live_labels(self, slot: int) -> tuple[str, ...]:
        return tuple(self.label(c) for c in self.live_channels(slot))

    # -- parameters ----------------------------------------------------------

    def with_params(self, updates: dict[str, float]) -> InterferometerSpec:
        """Copy with beamsplitter parameters replaced, e.g. ``{"BS1.theta": 0.3}``."""
        nodes = {n.name: n for n in self.nodes}
        for key, value in updates.items():
            name, _, attr = key.partition(".")
            if name not in nodes or nodes[name].kind != "beamsplitter" or attr not in ("theta", "phi"):
                raise UnknownName(f"no beamsplitter parameter {key!r}")
            nodes[name] = replace(nodes[name], **{attr: float(value)})
        return build_spec(tuple(nodes[n.name] for n in self.nodes), self.channels, self.probes)


@dataclass(frozen=True)
class StageUnitary:
    slot: int
    matrix: NDArray[np.complex128]
    nodes: tuple[str, ...] = ()


@dataclass(frozen=True)
class UnitarityReport:
    passed: bool
    tol: float
    deviations: dict[int, float]

    @property
    def offending(self) -> list[int]:
        return [s for s, d in self.deviations.items() if d > self.tol]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)


# ---------------------------------------------------------------------------
# lexing and parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<arrow>->)
  | (?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[:.+])
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


class _Line:
    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.tokens: list[tuple[str, str, int]] = []
        for m in _TOKEN.finditer(text):
            kind = m.lastgroup
            if kind == "ws":
                continue
            if kind == "bad":
                raise ItfSyntaxError(f"unexpected character {m.group()!r}", lineno, m.start() + 1)
            if kind == "punct":
                kind = m.group()
            self.tokens.append((kind, m.group(), m.start() + 1))
        self.pos = 0
        self.end_col = len(text) + 1

    def error(self, message: str) -> ItfSyntaxError:
        col = self.tokens[self.pos][2] if self.pos < len(self.tokens) else self.end_col
        return ItfSyntaxError(message, self.lineno, col)

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str, what: str | None = None) -> str:
        tok = self.peek()
        if tok is None or tok[0] != kind:
            found = "end of line" if tok is None else repr(tok[1])
            raise self.error(f"expected {what or kind}, found {found}")
        self.pos += 1
        return tok[1]

    def keyword(self, word: str) -> None:
        tok = self.peek()
        if tok is None or tok[0] != "id" or tok[1] != word:
            found = "end of line" if tok is None else repr(tok[1])
            raise self.error(f"expected {word!r}, found {found}")
        self.pos += 1

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "id" and tok[1] == word

    def number(self) -> float:
        return float(self.take("num", "a number"))

    def integer(self) -> int:
        text = self.take("num", "an integer")
        if not re.fullmatch(r"\d+", text):
            self.pos -= 1
            raise self.error(f"expected a non-negative integer, found {text!r}")
        return int(text)

    def port(self) -> Port:
        node = self.take("id", "a node name")
        self.take(".", "'.'")
        name = self.take("id", "a port name")
        if name not in ("in1", "in2", "out1", "out2"):
            self.pos -= 1
            raise self.error(f"unknown port {name!r}")
        return Port(node, name)

    def done(self) -> None:
        if self.pos != len(self.tokens):
            raise self.error(f"unexpected {self.tokens[self.pos][1]!r}")


def parse_chanexpr(text: str) -> tuple[str, ...]:
    """Parse ``ID ("+" ID)*`` as used by probe targets and frameworks."""
    line = _Line(text, 1)
    names = [line.take("id", "a channel name")]
    while line.peek() is not None:
        line.take("+", "'+'")
        names.append(line.take("id", "a channel name"))
    if len(set(names)) != len(names):
        raise ItfSyntaxError(f"repeated channel in {text!r}")
    return tuple(names)


def _chanexpr(line: _Line) -> tuple[str, ...]:
    names = [line.take("id", "a channel name")]
    while (tok := line.peek()) is not None and tok[0] == "+":
        line.pos += 1
        names.append(line.take("id", "a channel name"))
    if len(set(names)) != len(names):
        raise line.error("repeated channel in probe targets")
    return tuple(names)


def parse_itf(text: str) -> InterferometerSpec:
    """Parse and validate an interferometer description.

    Raises:
        ItfSyntaxError: malformed line (carries line and column).
        DuplicateName, UnknownName, DanglingPort, PortConflict, NotADag,
        NoSource, InvalidParameter: topology or parameter problems.
    """
    nodes: list[NodeSpec] = []
    channels: list[ChannelSpec] = []
    probes: list[ProbeDecl] = []
    lines: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _Line(raw.split("#", 1)[0], lineno)
        if not line.tokens:
            continue
        head = line.take("id", "a statement keyword")
        if head in _KEYWORD_KIND:
            name = line.take("id", "a node name")
            theta = phi = 0.0
            if head == "bs":
                line.keyword("theta")
                theta = line.number()
                if line.at_keyword("phi"):
                    line.pos += 1
                    phi = line.number()
            line.done()
            key = f"node:{name}"
            if key in lines:
                raise DuplicateName(f"node {name!r} already declared on line {lines[key]}", lineno)
            lines[key] = lineno
            nodes.append(NodeSpec(name, _KEYWORD_KIND[head], theta, phi))
        elif head == "chan":
            name = line.take("id", "a channel name")
            line.take(":", "':'")
            src = line.port()
            line.take("arrow", "'->'")
            dst = line.port()
            line.done()
            key = f"chan:{name}"
            if key in lines:
                raise DuplicateName(f"channel {name!r} already declared on line {lines[key]}", lineno)
            lines[key] = lineno
            channels.append(ChannelSpec(name, src, dst))
        elif head == "probe":
            name = line.take("id", "a probe name")
            line.keyword("on")
            targets = _chanexpr(line)
            line.keyword("eps")
            eps = line.number()
            slot = None
            if line.at_keyword("slot"):
                line.pos += 1
                slot = line.integer()
            line.done()
            key = f"probe:{name}"
            if key in lines:
                raise DuplicateName(f"probe {name!r} already declared on line {lines[key]}", lineno)
            lines[key] = lineno
            probes.append(ProbeDecl(name, targets, eps, slot))
        else:
            line.pos -= 1
            raise line.error(f"unknown keyword {head!r}")

    return build_spec(tuple(nodes), tuple(channels), tuple(probes), lines)


# ---------------------------------------------------------------------------
# validation and slot assignment


def _topological_order(nodes, channels) -> tuple[str, ...]:
    sorter: graphlib.TopologicalSorter = graphlib.TopologicalSorter()
    for n in nodes:
        sorter.add(n.name)
    for c in channels:
        sorter.add(c.dst.node, c.src.node)
    try:
        return tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        cycle = " -> ".join(exc.args[1])
        raise NotADag(f"cycle through {cycle}") from None


def build_spec(
    nodes: tuple[NodeSpec, ...],
    channels: tuple[ChannelSpec, ...],
    probes: tuple[ProbeDecl, ...] = (),
    lines: dict[str, int] | None = None,
) -> InterferometerSpec:
    """Validate a topology and assign time slots."""
    lines = lines or {}
    by_name: dict[str, NodeSpec] = {}
    for n in nodes:
        if n.name in by_name:
            raise DuplicateName(f"node {n.name!r} declared twice", lines.get(f"node:{n.name}"))
        by_name[n.name] = n
        if n.kind not in PORTS:
            raise InvalidParameter(f"unknown node kind {n.kind!r}")
        if n.kind == "beamsplitter":
            if not (0.0 <= n.theta <= math.pi / 2):
                raise InvalidParameter(
                    f"{n.name}: theta={n.theta!r} outside [0, pi/2]", lines.get(f"node:{n.name}")
                )
            if not math.isfinite(n.phi):
                raise InvalidParameter(f"{n.name}: phi must be finite", lines.get(f"node:{n.name}"))
    names = [c.name for c in channels]
    for c in channels:
        if names.count(c.name) > 1:
            raise DuplicateName(f"channel {c.name!r} declared twice", lines.get(f"chan:{c.name}"))
    pnames = [p.name for p in probes]
    for p in probes:
        if pnames.count(p.name) > 1:
            raise DuplicateName(f"probe {p.name!r} declared twice", lines.get(f"probe:{p.name}"))

    sources = [n for n in nodes if n.kind == "source"]
    if not sources:
        raise NoSource("no source declared")
    if len(sources) > 1:
        raise NoSource(f"expected exactly one source, found {len(sources)}")

    used: dict[Port, str] = {}
    for c in channels:
        where = lines.get(f"chan:{c.name}")
        for port, side in ((c.src, 1), (c.dst, 0)):
            if port.node not in by_name:
                raise UnknownName(f"channel {c.name!r} references undeclared node {port.node!r}", where)
            allowed = PORTS[by_name[port.node].kind][side]
            if port.name not in allowed:
                role = "output" if side else "input"
                raise UnknownName(f"{by_name[port.node].kind} {port.node} has no {role} port {port.name}", where)
            if port in used:
                raise PortConflict(str(port), where)
            used[port] = c.name

    for n in nodes:
        ins, outs = PORTS[n.kind]
        where = lines.get(f"node:{n.name}")
        for p in outs:
            if Port(n.name, p) not in used:
                raise DanglingPort(f"{n.name}.{p}", where)
        if n.kind == "beamsplitter":
            if not any(Port(n.name, p) in used for p in ins):
                raise DanglingPort(f"{n.name}.in1", where)
        else:
            for p in ins:
                if Port(n.name, p) not in used:
                    raise DanglingPort(f"{n.name}.{p}", where)

    order = _topological_order(nodes, channels)
    preds: dict[str, list[str]] = {n.name: [] for n in nodes}
    for c in channels:
        preds[c.dst.node].append(c.src.node)
    source = sources[0].name
    rank: dict[str, int] = {}
    for name in order:
        if name == source:
            rank[name] = 0
        elif not preds[name]:
            raise NotADag(f"node {name!r} is not reachable from the source")
        else:
            if any(p not in rank for p in preds[name]):
                raise NotADag(f"node {name!r} is not reachable from the source")
            rank[name] = 1 + max(rank[p] for p in preds[name])
    unreachable = [n.name for n in nodes if n.name not in rank]
    if unreachable:
        raise NotADag(f"nodes not reachable from the source: {', '.join(unreachable)}")

    slots: dict[str, int] = {}
    for name in order:
        kind = by_name[name].kind
        if kind == "mirror":
            slots[name] = max(slots[preds[name][0]], 1)
        elif kind != "detector":
            slots[name] = rank[name]
    final = max(slots.values())
    for n in nodes:
        if n.kind == "detector":
            slots[n.name] = final
    slots = {n.name: slots[n.name] for n in nodes}

    channel_names = set(names)
    for p in probes:
        for t in p.targets:
            if t not in channel_names:
                raise UnknownName(f"probe {p.name!r} targets undeclared channel {t!r}", lines.get(f"probe:{p.name}"))
    return InterferometerSpec(tuple(nodes), tuple(channels), tuple(probes), slots)


# ---------------------------------------------------------------------------
# printing


def format_itf(spec: InterferometerSpec) -> str:
    """Canonical text for ``spec``; parsing it gives back an equal spec."""
    keyword = {v: k for k, v in _KEYWORD_KIND.items()}
    out = []
    for n in spec.nodes:
        if n.kind == "beamsplitter":
            line = f"bs {n.name} theta {n.theta!r}"
            if n.phi != 0.0:
                line += f" phi {n.phi!r}"
            out.append(line)
        else:
            out.append(f"{keyword[n.kind]} {n.name}")
    for c in spec.channels:
        out.append(f"chan {c.name}: {c.src} -> {c.dst}")
    for p in spec.probes:
        line = f"probe {p.name} on {'+'.join(p.targets)} eps {p.eps!r}"
        if p.slot is not None:
            line += f" slot {p.slot}"
        out.append(line)
    return "\n".join(out) + "\n"


def canonical_text() -> str:
    """The shipped nested Mach-Zehnder description."""
    return resources.files("nested_mzi").joinpath("data/nested_mzi.itf").read_text(encoding="utf-8")


def default_nested_mzi() -> InterferometerSpec:
    """Nested Mach-Zehnder with all beamsplitters at theta=pi/4, phi=0.

    Detectors D1, D2, D3 sit on channels F, G, H; the inner interferometer
    BS2-BS3 sends light entering through D entirely into H.
    """
    return parse_itf(canonical_text())


# ---------------------------------------------------------------------------
# stage unitaries


def beamsplitter_block(theta: float, phi: float = 0.0) -> NDArray[np.complex128]:
    """2x2 transfer matrix, rows (out1, out2), columns (in1, in2)."""
    c, s = math.cos(theta), math.sin(theta)
    e = complex(math.cos(phi), math.sin(phi))
    return np.array([[c, 1j * s], [e * 1j * s, e * c]], dtype=np.complex128)


def node_unitary(spec: InterferometerSpec, name: str) -> NDArray[np.complex128]:
    """Unitary of one element on the full channel basis.

    The element's transfer block maps its input channels to its output
    channels.  A vacuum beamsplitter input borrows the column of the output
    channel on the same side (``in2`` uses ``out2``); basis vectors left over
    in the block are paired up so the result stays unitary.
    """
    node = spec.node[name]
    idx = spec.channel_index
    n = spec.n_channels
    if node.kind == "beamsplitter":
        o1 = idx[spec.port_channel(name, "out1")]
        o2 = idx[spec.port_channel(name, "out2")]
        c1 = spec.port_channel(name, "in1")
        c2 = spec.port_channel(name, "in2")
        i1 = idx[c1] if c1 is not None else o1
        i2 = idx[c2] if c2 is not None else o2
        block = beamsplitter_block(node.theta, node.phi)
        cols, rows = [i1, i2], [o1, o2]
    elif node.kind == "mirror":
        block = np.ones((1, 1), dtype=np.complex128)
        cols = [idx[spec.port_channel(name, "in1")]]
        rows = [idx[spec.port_channel(name, "out1")]]
    else:
        return np.eye(n, dtype=np.complex128)

    u = np.eye(n, dtype=np.complex128)
    touched = sorted(set(cols) | set(rows))
    u[np.ix_(touched, touched)] = 0.0
    u[np.ix_(rows, cols)] = block
    spare_cols = [i for i in touched if i not in cols]
    spare_rows = [i for i in touched if i not in rows]
    for r, c in zip(spare_rows, spare_cols):
        u[r, c] = 1.0
    return u


def compile_stages(spec: InterferometerSpec) -> list[StageUnitary]:
    """One unitary per slot 1..final (slot 0 holds the source state)."""
    stages = []
    for slot in range(1, spec.final_slot + 1):
        names = spec.nodes_at(slot)
        u = np.eye(spec.n_channels, dtype=np.complex128)
        for name in names:
            u = node_unitary(spec, name) @ u
        stages.append(StageUnitary(slot, u, names))
    return stages


def propagator(stages: list[StageUnitary], start: int, stop: int) -> NDArray[np.complex128]:
    """Product of stage unitaries taking the state at slot ``start`` to ``stop``."""
    if not stages:
        raise ValueError("no stages")
    n = stages[0].matrix.shape[0]
    u = np.eye(n, dtype=np.complex128)
    for st in stages:
        if start < st.slot <= stop:
            u = st.matrix @ u
    return u


def validate_unitarity(stages: list[StageUnitary], tol: float = 1e-12) -> UnitarityReport:
    """Max-entry deviation of U^dagger U from identity, per stage."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    deviations = {}
    for st in stages:
        m = st.matrix
        deviations[st.slot] = float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))
    return UnitarityReport(all(d <= tol for d in deviations.values()), tol, deviations)
