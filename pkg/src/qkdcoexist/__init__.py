"""Machine-learning assisted coexistence of QKD with classical DWDM traffic.

Modules
-------
grid
    Channel grid, unit conversions and the classical/quantum channel types.
physics
    Noise model (Raman, four-wave mixing, leakage) and BB84 key-rate model.
dataset
    Synthetic measurement campaign, featurization and file round-trip.
ml
    Five regressors fitted from scratch plus model comparison.
controller
    Monitor, predict and re-allocate decisions for a staged scenario.
wire
    Switch-configuration message codec and the append-only record log.
cli
    ``qkdcoexist`` command-line entry point.
"""

__version__ = "0.1.0"
