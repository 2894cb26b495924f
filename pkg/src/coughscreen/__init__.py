"""TB screening baseline: cough audio features, leakage-free nested validation,
isotonic calibration, and cougher-level conformal prediction."""

__version__ = "0.1.0"
