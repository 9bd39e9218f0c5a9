"""Exception types shared by the simulator, the analysis and the CLI."""


class SelfOscillationError(ValueError):
    """Blue-detuned drive at or above the parametric-instability threshold.

    Raised whenever the optical anti-damping reaches the intrinsic damping,
    i.e. the total linewidth is no longer positive and the linear
    (Lorentzian) response model is invalid.
    """


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Corrupted or inconsistent data file (CLI exit code 3).

    Parameters
    ----------
    message : str
    offset : int, optional
        Byte offset in the offending file, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(RuntimeError):
    """A fit or calibration failed to converge (CLI exit code 4)."""
