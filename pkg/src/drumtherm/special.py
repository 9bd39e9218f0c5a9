"""Complex digamma function.

Upward recurrence moves the argument to ``Re z >= 8`` where the Stirling
(asymptotic) series converges to double precision; the reflection formula
handles ``Re z < 1/2``.
"""
import numpy as np

# B_2k / (2k) for k = 1..7
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_SHIFT_TO = 8.0


def _digamma_right(z):
    # Re z >= 1/2 assumed
    shift = np.maximum(0, np.ceil(_SHIFT_TO - z.real)).astype(int)
    acc = np.zeros_like(z)
    w = z.copy()
    for k in range(int(shift.max(initial=0))):
        active = shift > k
        acc[active] -= 1.0 / w[active]
        w[active] += 1.0
    inv2 = 1.0 / (w * w)
    series = np.zeros_like(z)
    for coeff in reversed(_ASYMPTOTIC):
        series = (series + coeff) * inv2
    return acc + np.log(w) - 0.5 / w - series


def digamma(z):
    """Digamma psi(z) for complex (or real) ``z``, vectorised.

    Poles at non-positive integers return ``nan``.
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.empty_like(z)
    left = z.real < 0.5
    if np.any(~left):
        out[~left] = _digamma_right(z[~left])
    if np.any(left):
        zl = z[left]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # psi(z) = psi(1 - z) - pi cot(pi z)
            # cot has period pi; dropping the integer part first is exact and
            # keeps the argument of tan small near the poles
            frac = zl - np.round(zl.real)
            out[left] = _digamma_right(1.0 - zl) - np.pi / np.tan(np.pi * frac)
        poles = (zl.imag == 0) & (zl.real == np.round(zl.real))
        if np.any(poles):
            tmp = out[left]
            tmp[poles] = np.nan
            out[left] = tmp
    return out[0] if scalar else out
