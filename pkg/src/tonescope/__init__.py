"""Explorable HDR tone mapping.

A kernel-prediction tone mapper with a latent appearance code, trained
adversarially against classical-operator targets and explored by gradient
ascent on a differentiable image-quality metric.
"""

__version__ = "0.1.0"
