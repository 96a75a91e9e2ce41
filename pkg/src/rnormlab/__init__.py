"""Norm-minimal interpolation by two-layer ReLU networks."""
