"""Numerical toolkit for the Ooguri-Vafa space, its spectral networks, Stokes
data of the associated flat connections and the Hitchin-section metric."""

from . import core, gluing, hitchin, network, ovspace, specfun, stokes

__version__ = "0.1.0"

__all__ = ["core", "specfun", "ovspace", "network", "stokes", "gluing", "hitchin", "__version__"]
