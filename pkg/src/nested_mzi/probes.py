"""Qubit probes weakly coupled to channels.

A probe starts in ``|0>`` (untriggered).  When the particle occupies one of
the probe's target channels at the probe's slot, the probe is rotated by

    R(eps) = [[cos eps, -sin eps],
              [sin eps,  cos eps]]

so the trigger probability is ``sin(eps)**2`` and a probe never triggers
when the particle is absent.  A probe with several targets (``w`` on
``B+C``) applies the same rotation on the whole subspace, so it does not
alter relative phases inside it.

Joint basis ordering is channel-major; probe ``k`` is bit ``k`` of the probe
index (little-endian), i.e. ``index = channel * 2**n + sum(bit_k << k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ChannelNotOccupiedAtSlot,
    DuplicateName,
    InvalidParameter,
    TargetNotOccupiedAtSlot,
    UnknownChannel,
    UnknownProbe,
)
from .interferometer import InterferometerSpec, parse_chanexpr

__all__ = [
    "JointSpace",
    "ProbeRegister",
    "ProbeSpec",
    "assemble_joint_space",
    "coupling_unitary",
    "parse_probe_args",
    "rotation",
]


@dataclass(frozen=True)
class ProbeSpec:
    name: str
    targets: tuple[str, ...]
    eps: float
    slot: int

    @property
    def label(self) -> str:
        return "+".join(self.targets)


def rotation(eps: float) -> NDArray[np.float64]:
    c, s = math.cos(eps), math.sin(eps)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ProbeRegister:
    """Ordered probes; probe ``k`` owns bit ``k`` of every outcome bitstring."""

    probes: tuple[ProbeSpec, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.probes]
        for name in names:
            if names.count(name) > 1:
                raise DuplicateName(f"probe {name!r} declared twice")

    @classmethod
    def build(cls, spec: InterferometerSpec, probes) -> ProbeRegister:
        """Validate ``probes`` against ``spec``.

        Targets may be given by any channel name of their mirror segment and
        are stored under the segment label.  ``slot=None`` means the default
        probe slot.
        """
        out = []
        for p in probes:
            slot = spec.probe_slot if p.slot is None else p.slot
            if not 0.0 <= p.eps <= math.pi / 2:
                raise InvalidParameter(f"probe {p.name!r}: eps={p.eps!r} outside [0, pi/2]")
            if not p.targets:
                raise InvalidParameter(f"probe {p.name!r} has no targets")
            if not 0 <= slot <= spec.final_slot:
                raise TargetNotOccupiedAtSlot(f"probe {p.name!r}: slot {slot} out of range")
            labels = []
            for t in p.targets:
                try:
                    spec.resolve(t, slot)
                except ChannelNotOccupiedAtSlot:
                    raise TargetNotOccupiedAtSlot(
                        f"probe {p.name!r}: channel {t!r} is not occupied at slot {slot}"
                    ) from None
                labels.append(spec.label(t))
            out.append(ProbeSpec(p.name, tuple(labels), float(p.eps), slot))
        return cls(tuple(out))

    @classmethod
    def from_spec(cls, spec: InterferometerSpec) -> ProbeRegister:
        """Register built from the ``probe`` lines of the description."""
        return cls.build(spec, spec.probes)

    def __len__(self) -> int:
        return len(self.probes)

    def __iter__(self):
        return iter(self.probes)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.probes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownProbe(f"unknown probe {name!r}") from None

    def __getitem__(self, name: str) -> ProbeSpec:
        return self.probes[self.index(name)]

    def bits_label(self, bits: str) -> str:
        """``"0100"`` -> ``"a=0;b=1;c=0;w=0"``."""
        return ";".join(f"{n}={b}" for n, b in zip(self.names, bits))


@dataclass(frozen=True)
class JointSpace:
    """(particle channels) x (probe qubits) basis description."""

    channels: tuple[str, ...]
    probes: tuple[str, ...]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def n_probes(self) -> int:
        return len(self.probes)

    @property
    def probe_dim(self) -> int:
        return 1 << self.n_probes

    @property
    def dim(self) -> int:
        return self.n_channels * self.probe_dim

    def index(self, channel: int | str, bits: str = "") -> int:
        if isinstance(channel, str):
            channel = self.channels.index(channel)
        return channel * self.probe_dim + bits_to_int(bits)

    def bitstrings(self) -> list[str]:
        return [int_to_bits(k, self.n_probes) for k in range(self.probe_dim)]


def bits_to_int(bits: str) -> int:
    return sum(1 << k for k, b in enumerate(bits) if b == "1")


def int_to_bits(value: int, width: int) -> str:
    return "".join("1" if value >> k & 1 else "0" for k in range(width))


def assemble_joint_space(spec: InterferometerSpec, register: ProbeRegister | None = None) -> JointSpace:
    names = register.names if register is not None else ()
    return JointSpace(spec.channel_names, names)


def target_projector(spec: InterferometerSpec, probe: ProbeSpec) -> NDArray[np.float64]:
    """Diagonal 0/1 vector marking the probe's target channels at its slot."""
    diag = np.zeros(spec.n_channels)
    for t in probe.targets:
        diag[spec.channel_index[spec.resolve(t, probe.slot)]] = 1.0
    return diag


def coupling_unitary(
    probe: ProbeSpec | str, register: ProbeRegister, spec: InterferometerSpec
) -> NDArray[np.complex128]:
    """``P (x) R(eps) + (1 - P) (x) 1`` on the probe's qubit, identity elsewhere."""
    if isinstance(probe, str):
        probe = register[probe]
    k = register.index(probe.name)
    if register.probes[k] != probe:
        raise UnknownProbe(f"probe {probe.name!r} differs from the registered one")
    try:
        p = np.diag(target_projector(spec, probe))
    except ChannelNotOccupiedAtSlot as exc:
        raise TargetNotOccupiedAtSlot(str(exc)) from None
    except KeyError as exc:
        raise UnknownChannel(str(exc)) from None
    n = len(register)
    # bit k is the k-th least significant, so it sits k factors from the right
    r = np.kron(np.kron(np.eye(1 << (n - 1 - k)), rotation(probe.eps)), np.eye(1 << k))
    eye_p = np.eye(1 << n)
    eye_c = np.eye(spec.n_channels)
    return (np.kron(p, r) + np.kron(eye_c - p, eye_p)).astype(np.complex128)


def parse_probe_args(text: str, default_slot: int | None = None) -> list[ProbeSpec]:
    """Parse ``name:targets:eps[:slot]`` items separated by commas.

    ``targets`` uses ``+`` for subspaces, e.g. ``b:B:0.1,w:B+C:0.1``.
    """
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) not in (3, 4):
            raise InvalidParameter(f"probe {item!r}: expected name:targets:eps[:slot]")
        name, targets, eps = parts[:3]
        try:
            eps_val = float(eps)
            slot = int(parts[3]) if len(parts) == 4 else default_slot
        except ValueError:
            raise InvalidParameter(f"probe {item!r}: bad number") from None
        out.append(ProbeSpec(name.strip(), parse_chanexpr(targets.strip()), eps_val, slot))
    return out
