"""Physical constants (SI) shared across the simulator."""
from scipy import constants as _c

MU0 = _c.mu_0
KB = _c.k
HBAR = _c.hbar
Q_E = _c.e
# gyromagnetic ratio of the free electron, rad/(s*T)
GAMMA = _c.physical_constants["electron gyromag. ratio"][0]
