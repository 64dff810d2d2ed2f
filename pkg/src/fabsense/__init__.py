"""Simulator for a daisy-chained fabric tactile sensing stack.

Submodules:

- ``crossbar``: piezoresistive crossbar and readout front end
- ``scan``: bus scan scheduling and the closed-form timing model
- ``protocol``: binary message codec with resynchronisation
- ``pipeline``: streaming Hampel filter and frame statistics
- ``experiments``: frame-rate, crosstalk, gain and latency harnesses
- ``grasp``: planar two-arm grasp plant with tactile feedback
- ``cli``: command-line entry point
"""

__version__ = "0.1.0"
