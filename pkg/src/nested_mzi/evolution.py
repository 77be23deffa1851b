"""Unitary evolution of particle plus probes and exact outcome statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .errors import UnknownName, UnknownProbe, ZeroProbabilityCondition
from .interferometer import InterferometerSpec, StageUnitary, compile_stages
from .probes import JointSpace, ProbeRegister, assemble_joint_space, coupling_unitary

__all__ = [
    "Experiment",
    "JointState",
    "OutcomeDistribution",
    "conditional_given_probe",
    "detector_distribution",
    "evolve",
    "joint_outcome_distribution",
]

# probabilities below this are treated as exact zeros before sampling
ZERO_CLAMP = 1e-15


class Experiment:
    """An interferometer together with a probe register.

    Holds the compiled stage unitaries lifted to the joint space and the
    probe couplings grouped by slot.  Cheap to build; everything is cached.
    """

    def __init__(self, spec: InterferometerSpec, register: ProbeRegister | None = None):
        self.spec = spec
        self.register = register if register is not None else ProbeRegister()
        self.space: JointSpace = assemble_joint_space(spec, self.register)

    def __repr__(self) -> str:
        return f"Experiment(channels={self.spec.n_channels}, probes={list(self.register.names)})"

    @cached_property
    def stages(self) -> list[StageUnitary]:
        return compile_stages(self.spec)

    @cached_property
    def _joint_stages(self) -> dict[int, NDArray[np.complex128]]:
        eye = np.eye(self.space.probe_dim)
        return {st.slot: np.kron(st.matrix, eye) for st in self.stages}

    @cached_property
    def _couplings(self) -> dict[int, list[NDArray[np.complex128]]]:
        out: dict[int, list] = {}
        for p in self.register:
            out.setdefault(p.slot, []).append(coupling_unitary(p, self.register, self.spec))
        return out

    def initial_vector(self, channel: str | None = None) -> NDArray[np.complex128]:
        channel = channel or self.spec.source_channel
        if channel not in self.spec.channel_index:
            raise UnknownName(f"unknown channel {channel!r}")
        vec = np.zeros(self.space.dim, dtype=np.complex128)
        vec[self.space.index(channel)] = 1.0
        return vec

    def step(self, vec: NDArray[np.complex128], slot: int) -> NDArray[np.complex128]:
        """Advance a joint vector from ``slot - 1`` to ``slot``.

        Slot 0 only applies couplings of probes placed on the source slot.
        """
        if slot > 0:
            vec = self._joint_stages[slot] @ vec
        for u in self._couplings.get(slot, ()):
            vec = u @ vec
        return vec

    def trajectory(self, initial: str | None = None) -> list[JointState]:
        """States at every slot 0..final."""
        vec = self.initial_vector(initial)
        states = []
        for slot in range(self.spec.n_slots):
            vec = self.step(vec, slot)
            states.append(JointState(vec, slot, self))
        return states

    def evolve(self, initial: str | None = None) -> JointState:
        return self.trajectory(initial)[-1]

    def detector_index(self, detector: str) -> int:
        return self.spec.channel_index[self.spec.detector_channel(detector)]


@dataclass(frozen=True, eq=False)
class JointState:
    amplitudes: NDArray[np.complex128]
    slot: int
    experiment: Experiment

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def matrix(self) -> NDArray[np.complex128]:
        """Amplitudes reshaped to (channels, probe index)."""
        sp = self.experiment.space
        return self.amplitudes.reshape(sp.n_channels, sp.probe_dim)

    def amplitude(self, channel: str, bits: str | None = None) -> complex:
        """Amplitude on ``channel`` (any name of its mirror segment) and probe bits."""
        spec = self.experiment.spec
        name = spec.resolve(channel, self.slot)
        bits = "0" * self.experiment.space.n_probes if bits is None else bits
        return complex(self.amplitudes[self.experiment.space.index(name, bits)])

    def particle_amplitudes(self) -> dict[str, complex]:
        """Live-channel amplitudes; only meaningful without probes."""
        if self.experiment.space.n_probes:
            raise ValueError("state is entangled with probes; use matrix()")
        spec = self.experiment.spec
        return {spec.label(c): complex(self.amplitudes[spec.channel_index[c]]) for c in spec.live_channels(self.slot)}


def evolve(
    spec: InterferometerSpec, register: ProbeRegister | None = None, initial: str | None = None
) -> JointState:
    """Final joint state for a particle entering on ``initial`` (default: the source channel)."""
    return Experiment(spec, register).evolve(initial)


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Born probabilities of (detector, probe bitstring) outcomes.

    ``cells`` are ordered detector-major in declaration order, bitstrings by
    integer value; ``bits[k]`` is probe ``k``.
    """

    cells: tuple[tuple[str, str], ...]
    probs: NDArray[np.float64]
    probes: tuple[str, ...]
    probe_slots: tuple[int, ...] = ()

    def __getitem__(self, key: tuple[str, str]) -> float:
        return float(self.probs[self.cells.index(key)])

    def __len__(self) -> int:
        return len(self.cells)

    def items(self):
        return zip(self.cells, (float(p) for p in self.probs))

    @property
    def detectors(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(d for d, _ in self.cells))

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def marginal(self) -> dict[str, float]:
        out = dict.fromkeys(self.detectors, 0.0)
        for (d, _), p in self.items():
            out[d] += p
        return out

    def probability(self, detector: str | None = None, **bits: int) -> float:
        """Probability of a detector click and/or probe values, e.g. ``probability("D1", w=1)``."""
        total = 0.0
        for (d, b), p in self.items():
            if detector is not None and d != detector:
                continue
            if all(b[self.probe_index(n)] == str(v) for n, v in bits.items()):
                total += p
        return total

    def probe_index(self, name: str) -> int:
        try:
            return self.probes.index(name)
        except ValueError:
            raise UnknownProbe(f"unknown probe {name!r}") from None

    def clamped(self) -> NDArray[np.float64]:
        return np.where(self.probs < ZERO_CLAMP, 0.0, self.probs)

    def to_dict(self) -> dict:
        return {
            "outcomes": [{"detector": d, "bits": b, "p": p} for (d, b), p in self.items()],
            "total_p": self.total,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def detector_distribution(state: JointState) -> dict[str, float]:
    """Marginal detector probabilities, summed over probe outcomes."""
    exp = state.experiment
    m = state.matrix()
    return {d: float(np.sum(np.abs(m[exp.detector_index(d)]) ** 2)) for d in exp.spec.detectors}


def joint_outcome_distribution(state: JointState) -> OutcomeDistribution:
    exp = state.experiment
    m = np.abs(state.matrix()) ** 2
    bitstrings = exp.space.bitstrings()
    cells, probs = [], []
    for d in exp.spec.detectors:
        row = m[exp.detector_index(d)]
        for k, bits in enumerate(bitstrings):
            cells.append((d, bits))
            probs.append(row[k])
    return OutcomeDistribution(
        tuple(cells), np.array(probs), exp.register.names, tuple(p.slot for p in exp.register)
    )


def conditional_given_probe(dist: OutcomeDistribution, probe: str, value: int) -> dict[str, float]:
    """Detector distribution conditioned on one probe's readout."""
    k = dist.probe_index(probe)
    want = str(int(value))
    sub = {d: 0.0 for d in dist.detectors}
    for (d, bits), p in dist.items():
        if bits[k] == want:
            sub[d] += p
    norm = sum(sub.values())
    if norm <= ZERO_CLAMP:
        raise ZeroProbabilityCondition(f"Pr({probe}={want}) = {norm:.3g}")
    return {d: p / norm for d, p in sub.items()}
