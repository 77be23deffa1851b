"""Walk a photon through the nested interferometer, one slot at a time.

The inner interferometer (BS2, B, C, BS3) is tuned so that whatever enters
through D leaves through H.  Nothing from D ever reaches E, so D1 only sees
light that went through A.
"""

from __future__ import annotations

import numpy as np

from nested_mzi import Experiment, compile_stages, default_nested_mzi, detector_distribution
from nested_mzi.interferometer import propagator

spec = default_nested_mzi()
print(spec)

exp = Experiment(spec)
for state in exp.trajectory():
    amps = {k: v for k, v in state.particle_amplitudes().items() if abs(v) > 1e-12}
    print(f"slot {state.slot}:", {k: np.round(v, 4) for k, v in amps.items()})

# the inner interferometer as a 2x2 transfer from D onto (E, H)
u = propagator(compile_stages(spec), 1, 4)
i = spec.channel_index
print("D -> E", np.round(u[i["E"], i["D"]], 15), "  D -> H", np.round(u[i["H"], i["D"]], 15))

print("detectors:", detector_distribution(exp.evolve()))

# detune BS3 and the E exit opens up
for theta in (0.6, 0.7, np.pi / 4, 0.9):
    s = spec.with_params({"BS3.theta": theta})
    u = propagator(compile_stages(s), 1, 4)
    print(f"BS3 theta={theta:.3f}: |D->E|^2 = {abs(u[i['E'], i['D']]) ** 2:.4f}")
