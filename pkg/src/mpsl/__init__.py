"""Multi-plasticity synergy learning for spiking networks.

Three plasticity rules (surrogate-gradient BPTT on W1, Hebbian on W2,
self-backpropagation on W3) co-modulate LIF membrane dynamics through
learnable fusion coefficients, and collapse to a single weight matrix
at deployment time.
"""

__version__ = "0.1.0"
