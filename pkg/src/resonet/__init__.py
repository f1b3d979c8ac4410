"""Fixed-point resonator neuron simulator with spectral, optical-flow and cochlea pipelines."""
from .fixed import COEF_FORMAT, PAYLOAD_FORMAT, STATE_FORMAT, Diagnostics, FixedFormat
from .neurons import (FixedComplex, HopfParams, LifParams, RfParams, SpikeEvent, accumulate_synaptic,
                      hopf_step, hopf_step_fixed, impulse_response, lif_step, rf_reset_step, rf_step)

__version__ = "0.1.0"

__all__ = [
    "COEF_FORMAT", "PAYLOAD_FORMAT", "STATE_FORMAT", "Diagnostics", "FixedFormat",
    "FixedComplex", "HopfParams", "LifParams", "RfParams", "SpikeEvent", "accumulate_synaptic",
    "hopf_step", "hopf_step_fixed", "impulse_response", "lif_step", "rf_reset_step", "rf_step",
]
