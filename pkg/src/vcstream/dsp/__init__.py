"""Deterministic signal-processing frontend/backend: mu-law companding,
streaming STFT + mel analysis, pseudo-QMF filterbanks, and audio/feature IO."""
