"""Multivariate time-series representations from trend, seasonal and independent components.

A window ``X[h, m]`` is encoded per timestep as ``[H_tr | H_s | H_i]``:
averaged dilated causal convolutions, a learnable per-frequency complex
transform, and FastICA on a sparse autoencoder's latent code. A ridge
regression from the last row forecasts the next ``k`` steps.
"""

__version__ = "0.1.0"
