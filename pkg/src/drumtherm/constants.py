"""Physical constants (SI) used throughout the package."""
from scipy import constants as _c

HBAR = _c.hbar
KB = _c.k
TWO_PI = 2.0 * _c.pi
EULER_GAMMA = 0.57721566490153286061
