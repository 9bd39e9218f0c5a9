"""
drumtherm: sideband thermometry of a microwave-optomechanical drum.

Forward simulation of Stokes / anti-Stokes spectra under a fluctuating
TLS bath, the windowed-fit analysis chain that turns them back into mode
populations and fluctuation statistics, and the phonon thermal budget of
the suspended membrane.
"""
__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericalError, SelfOscillationError  # noqa: E402

__all__ = ["__version__", "ConfigError", "DataError", "NumericalError", "SelfOscillationError"]
