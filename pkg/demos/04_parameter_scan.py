"""Search beamsplitter settings where {C, A+B} gives a sharp inference from D1.

At the default 50/50 settings {C, A+B} is not even consistent.  A grid over
the four mixing angles (and the BS3 phase) lists every point where it is
consistent and puts C before a D1 click with probability >= 0.999.

Every hit turns out to have some beamsplitter fully transmitting or fully
reflecting.  In this layout C reaches D3 through BS3 whatever happens, so
consistency at D3 needs B to be dark there as well, which pins BS2 or BS3
to an endpoint.  The scan reports what it finds and does not force
a nondegenerate answer.
"""

from __future__ import annotations

import math
import time

from nested_mzi import Experiment, ScanSpec, default_nested_mzi, detector_distribution, parse_axis, scan

spec = default_nested_mzi()
half = math.pi / 2

axes = tuple(parse_axis(f"BS{k}.theta=0:{half!r}:9") for k in (1, 2, 3, 4))
axes += (parse_axis(f"BS3.phi=0:{math.pi!r}:3"),)
target = ScanSpec(axes, "probe:{C,A+B}", "C", "D1", min_prob=0.999)

t0 = time.perf_counter()
hits = scan(spec, target, workers=4)
print(f"{len(hits)} hits on {9**4 * 3} grid points in {time.perf_counter() - t0:.1f} s")


def degenerate(params):
    return any(
        min(abs(v), abs(v - half)) < 1e-12 for k, v in params.items() if k.endswith("theta")
    )


inner = [h for h in hits if not degenerate(h.params)]
print(f"{len(inner)} hits with every beamsplitter strictly between 0 and pi/2")

by_rate = sorted(
    hits, key=lambda h: -detector_distribution(Experiment(spec.with_params(h.params)).evolve())["D1"]
)
for h in by_rate[:8]:
    p1 = detector_distribution(Experiment(spec.with_params(h.params)).evolve())["D1"]
    angles = ", ".join(f"{k}={v:.3f}" for k, v in h.params.items())
    print(f"  Pr(D1)={p1:.3f}  Pr(C|D1)={h.probability:.4f}  {angles}")
