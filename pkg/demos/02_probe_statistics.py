"""Weak probes on the arms: what b and w report, and how often.

A b probe on channel B is triggered at rate sin^2(eps)/4, and a triggered
photon is as likely to reach D1 as an untouched one.  The kick upsets the
inner interference.  A w probe coupled to B+C as a whole never fires together
with D1.
"""

from __future__ import annotations

import math

from nested_mzi import (
    Experiment,
    ProbeRegister,
    ProbeSpec,
    coincidence_table,
    conditional_given_probe,
    default_nested_mzi,
    joint_outcome_distribution,
)

spec = default_nested_mzi()
slot = spec.probe_slot
eps = 0.1

reg = ProbeRegister.build(spec, [ProbeSpec("b", ("B",), eps, slot), ProbeSpec("w", ("B", "C"), eps, slot)])
dist = joint_outcome_distribution(Experiment(spec, reg).evolve())

print(f"eps = {eps}, sin^2 eps = {math.sin(eps) ** 2:.6g}")
for (det, bits), p in dist.items():
    print(f"  {det} {reg.bits_label(bits):9s} {p:.6e}")

print("given b=1:", conditional_given_probe(dist, "b", 1))
print("given w=1:", conditional_given_probe(dist, "w", 1))
print("Pr(w=1 and D1) =", dist.probability("D1", w=1))

# a million runs, partitioned over four threads; same table for any split
table = coincidence_table(dist, 10**6, seed=42, workers=4)
print(table.to_csv())
for cell, p in dist.items():
    print(f"  {cell}: exact {p:.6f}  observed {table.frequency(cell):.6f}")
