"""diraclab: spectral laboratory for Dirac bundles on flat tori."""

__version__ = "0.1.0"
