"""
A chirp through a resonator bank
================================

A bank of graded resonate-and-fire neurons computes an exponentially windowed STFT.
Instead of reading every coefficient each sample, we keep only the spikes, and then
rebuild the waveform from them. Run with ``python demos/02_spiking_stft.py``.
"""

import numpy as np

from resonet.signal_io import gen_chirp
from resonet.spectral import (RfBankConfig, dense_stft_oracle, encode_stft, pearson, reconstruct,
                              threshold_sweep, topk_stft_baseline)

fs = 16000.0
x = gen_chirp(100.0, 4000.0, 1.0, fs, 0.5).samples
bank = RfBankConfig()  # 100 neurons, log spaced 60 Hz .. 4.2 kHz
print(f"{bank.n_neurons} neurons, decay {bank.decay}, kernel {bank.kernel_length} taps")

# %%
# The bank's internal state is the STFT. Check it against the closed-form window sum
# on a short excerpt.
head = x[:3000]
states = encode_stft(head, bank, keep_states=True).states
oracle = dense_stft_oracle(head, bank)
print("state vs oracle, relative error:", np.max(np.abs(states - oracle)) / np.max(np.abs(oracle)))

# %%
# Spikes arrive once per oscillation when the real part clears the threshold, so the
# raster follows the chirp upward through the bank.
spec = encode_stft(x, bank)
for t0 in range(0, len(x), 4000):
    sel = (spec.t >= t0) & (spec.t < t0 + 4000)
    print(f"  {t0 / fs:.2f}-{(t0 + 4000) / fs:.2f} s: {sel.sum():5d} spikes, "
          f"busiest neuron {np.bincount(spec.neuron[sel]).argmax():3d}")

# %%
# Reconstruction convolves each spike with its neuron's oscillation kernel.
y = reconstruct(spec, reference=x)
dense = bank.n_neurons * len(x)
print(f"{len(spec)} spikes vs {dense} dense values ({dense / len(spec):.0f}x fewer), "
      f"correlation {pearson(x, y):.3f}")

# %%
# Raising the threshold trades fidelity for sparsity.
for r in threshold_sweep(x, bank, [0.5, 2.0, 8.0, 16.0]):
    print(f"  threshold {r['threshold']:5.1f}: {r['n_spikes']:6d} spikes, "
          f"correlation {r['reconstruction_correlation']:.3f}")

# %%
# For comparison, a conventional Hann STFT keeping only its K largest coefficients.
for k in (5000, 500000):
    b = topk_stft_baseline(x, k)
    print(f"  top-{k} dense STFT: correlation {b['correlation']:.3f}")
