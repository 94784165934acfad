"""Recoil dynamics of collectively decaying atoms with quantized trap states.

Evolves the joint electronic/vibrational density matrix of a small atom
ensemble under a Lindblad master equation, attributing the deposited
vibrational energy and momentum to individual generator terms.
"""

__version__ = "1.0.0"

from .config import (E_MINUS, E_PLUS, GAMMA, WAVELENGTH, LaserParams,
                     SystemConfig, UnitSystem, load_config, load_config_file)
from .dynamics import (decay_to_ground, frequency_sweep, integrate,
                       steady_state)
from .errors import (AssemblyError, CapacityError, ConfigError, NumericsError,
                     VibrecoilError)
from .greens import (CollectiveModes, collective_modes, greens,
                     greens_directional, self_limits)
from .hilbert import Basis, build_basis, initial_state
from .liouvillian import GeneratorSet, assemble, dark_mode_check

__all__ = [
    "__version__", "GAMMA", "WAVELENGTH", "E_PLUS", "E_MINUS",
    "SystemConfig", "LaserParams", "UnitSystem", "load_config",
    "load_config_file", "Basis", "build_basis", "initial_state",
    "GeneratorSet", "assemble", "dark_mode_check", "CollectiveModes",
    "collective_modes", "greens", "greens_directional", "self_limits",
    "integrate", "decay_to_ground", "steady_state", "frequency_sweep",
    "VibrecoilError", "ConfigError", "AssemblyError", "NumericsError",
    "CapacityError",
]
