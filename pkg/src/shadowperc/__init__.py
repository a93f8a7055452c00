"""Shadow slope fields of smoothed white-noise Gaussian landscapes.

Submodules: kernel, sampler, shadow, percolation, renorm, ordering, cli.
"""

__version__ = "0.1.0"
