"""Streaming low-latency voice conversion.

Sparse recurrent spectral conversion model, multiband autoregressive neural
vocoder with logit-space linear prediction, deterministic DSP frontend and
backend, forward-only loss evaluators, objective metrics, and a streaming
engine with latency/RTF accounting.
"""

__version__ = "0.1.0"
