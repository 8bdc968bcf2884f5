"""Two-channel azimuth estimation: scene simulation, IPD features, the
LightDOA network and a GCC-PHAT reference estimator."""

__version__ = "0.1.0"
