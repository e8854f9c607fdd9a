"""Learning-based maximum-likelihood detection for one-bit massive MIMO uplinks.

Thin python layer over the C++ core: signal model, likelihood learning
(naive, dither-and-learning, ADL), one-bit detectors, polar-coded soft-output
pipeline and the Monte Carlo sweep harness.
"""

from ._obml import *  # noqa: F401,F403
