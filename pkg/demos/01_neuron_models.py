"""
Four neuron models, one impulse
===============================

Each model gets a single input at t=0 and we watch what the state does afterwards.
Run with ``python demos/01_neuron_models.py``.
"""

import numpy as np

from resonet import STATE_FORMAT, HopfParams, LifParams, RfParams, impulse_response
from resonet.neurons import UNARY_RESET

# %%
# LIF: the current decays geometrically and the voltage integrates it, so the voltage
# rises for a few steps before leaking away. A low threshold makes it fire once.
lif = impulse_response("lif", LifParams(0.8, 0.9, 2.0), 30, impulse=1.0)
print("LIF voltage, first 10 steps:", np.round(lif["v"][:10], 3))
print("LIF spike steps:", np.nonzero(lif["spike"])[0])

# %%
# Resonate-and-fire: the complex state spirals inward. The graded variant fires when
# the phase passes zero with the real part above threshold, and sends that real part.
rf = impulse_response("rf", RfParams(0.97, 2 * np.pi / 20, threshold=0.2), 120)
z = rf["re"] + 1j * rf["im"]
print("RF |z| every 20 steps:", np.round(np.abs(z[::20]), 3))
spikes = np.nonzero(rf["spike"])[0]
print("RF graded spikes at", spikes, "payloads", np.round(rf["spike"][spikes], 3))

# %%
# The same recurrence in 24-bit fixed point, compared with float run on the same
# quantised coefficients, stays within a few quanta.
p = RfParams(0.97, 2 * np.pi / 20, threshold=0.2)
rf = impulse_response("rf", p.quantized(STATE_FORMAT), 120)
rfq = impulse_response("rf", p, 120, fmt=STATE_FORMAT)
err = np.max(np.abs((rfq["re"] - rf["re"]) + 1j * (rfq["im"] - rf["im"])))
print(f"fixed vs float max deviation: {err / STATE_FORMAT.quantum:.1f} quanta")

# %%
# With reset, every step whose imaginary part is above threshold emits a unary spike
# and clears the real part. The imaginary part then only decays, so the neuron fires
# a short burst and falls silent.
rr = impulse_response("rf_reset", RfParams(0.97, 2 * np.pi / 20, threshold=0.3, output_mode=UNARY_RESET), 60)
print("RF-reset spike steps:", np.nonzero(rr["spike"])[0])

# %%
# Hopf: above the bifurcation (lam > 0) a tiny kick grows into a limit cycle of
# radius sqrt(lam); below it the kick dies out.
for lam in (0.04, -0.04):
    h = impulse_response("hopf", HopfParams(2 * np.pi * 5, lam, 0.002), 10000, impulse=0.01)
    r = np.hypot(h["re"], h["im"])
    print(f"Hopf lam={lam:+.2f}: |z| at end {r[-1]:.4f} (sqrt(lam) = {np.sqrt(max(lam, 0)):.4f})")
