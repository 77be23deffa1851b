"""Grid search over beamsplitter parameters for frameworks with a sharp inference.

Typical use: find settings where ``{C, A+B}`` at the probe slot is
consistent and ``Pr(C | D1) >= 0.999``.  The grid is explicit so runs are
reproducible; an empty grid gives an empty result.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, MziError
from .evolution import Experiment
from .histories import DEFAULT_TOL, check_consistency, conditional_distribution, decoherence_matrix, parse_framework
from .interferometer import InterferometerSpec

__all__ = ["ScanAxis", "ScanHit", "ScanSpec", "parse_axis", "scan"]


@dataclass(frozen=True)
class ScanAxis:
    key: str  # "BS1.theta"
    values: tuple[float, ...]


def parse_axis(text: str) -> ScanAxis:
    """``BS1.theta=start:stop:num`` (inclusive linspace) or ``BS1.phi=v1,v2,...``."""
    key, sep, rng = text.partition("=")
    key = key.strip()
    if not sep or "." not in key:
        raise InvalidParameter(f"bad grid axis {text!r}; expected NODE.param=range")
    rng = rng.strip()
    try:
        if ":" in rng:
            parts = rng.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 0:
                raise ValueError
            values = tuple(float(v) for v in np.linspace(start, stop, num))
        elif rng:
            values = tuple(float(v) for v in rng.split(","))
        else:
            values = ()
    except ValueError:
        raise InvalidParameter(f"bad grid range {rng!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise InvalidParameter(f"non-finite value in {text!r}")
    return ScanAxis(key, values)


@dataclass(frozen=True)
class ScanSpec:
    axes: tuple[ScanAxis, ...]
    framework: str
    target: str
    given: str
    min_prob: float = 0.999
    tol: float = DEFAULT_TOL

    def points(self):
        keys = [a.key for a in self.axes]
        for combo in itertools.product(*(a.values for a in self.axes)):
            yield dict(zip(keys, combo))


@dataclass(frozen=True)
class ScanHit:
    params: dict[str, float]
    max_offdiag: float
    probability: float

    def to_dict(self) -> dict:
        return {"params": self.params, "max_offdiag": self.max_offdiag, "probability": self.probability}


def _evaluate(base: InterferometerSpec, s: ScanSpec, point: dict[str, float]) -> ScanHit | None:
    spec = base.with_params(point)
    fw = parse_framework(s.framework, spec)
    exp = Experiment(spec)
    dm = decoherence_matrix(fw, exp)
    rep = check_consistency(dm, s.tol)
    if not rep.consistent:
        return None
    try:
        cond = conditional_distribution(fw, s.given, exp, s.tol, dm)
    except MziError:
        return None
    matches = [p for e, p in cond.items() if e.label == s.target and not e.complement]
    if not matches:
        raise InvalidParameter(f"{s.target!r} is not an element of {fw.describe()!r}")
    if matches[0] >= s.min_prob:
        return ScanHit(point, rep.max_offdiag, matches[0])
    return None


def scan(spec: InterferometerSpec, s: ScanSpec, workers: int = 1) -> list[ScanHit]:
    """Grid points where the framework is consistent and ``Pr(target | given) >= min_prob``.

    Hits are listed in grid order regardless of ``workers``.
    """
    points = list(s.points())
    for p in points[:1]:
        spec.with_params(p)  # validates parameter names up front
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda p: _evaluate(spec, s, p), points))
    else:
        results = [_evaluate(spec, s, p) for p in points]
    return [r for r in results if r is not None]
