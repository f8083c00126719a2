"""vamap: environment mapping of reflective facades from fused monostatic
backscatter and bistatic multipath pseudo-measurements.

Facades are parameterized by virtual anchors (mirror images of a transmitter
across a facade plane) and estimated with a particle-based Bernoulli filter
using sum-product data association. Two fusion schedules, a single-bounce
scene simulator, and an OSPA evaluation harness are included; see the
``cli`` module for the command-line pipeline.
"""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
