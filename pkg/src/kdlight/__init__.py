"""Electron matter-wave scattering by structured, pulsed standing light waves.

Subpackages: ``model`` (configuration types), ``beams`` (Hermite-Gaussian
fields and closed-form spectra), ``maxwell`` (2D FDTD), ``tdse`` (minimal
coupling Schrodinger solver), ``volkov`` (Bessel diffraction oracle),
``diagnostics`` (spectra and sideband analysis) and ``harness`` (CLI).
"""

__version__ = "0.1.0"
