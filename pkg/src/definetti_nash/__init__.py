"""Threshold equilibria of the two-player de Finetti extraction game.

The public names of the submodules are re-exported here, so
``from definetti_nash import solve_psi, build_equilibrium`` works.
"""
from .coeffs import *  # noqa: F401,F403
from .profit import *  # noqa: F401,F403
from .fundsol import *  # noqa: F401,F403
from .equilibrium import *  # noqa: F401,F403
from .strategy import *  # noqa: F401,F403
from .simulate import *  # noqa: F401,F403
from .payoff import *  # noqa: F401,F403
from .presets import *  # noqa: F401,F403
from . import coeffs, profit, fundsol, equilibrium, strategy, simulate, payoff, presets

__version__ = "0.1.0"

__all__ = (coeffs.__all__ + profit.__all__ + fundsol.__all__ + equilibrium.__all__
           + strategy.__all__ + simulate.__all__ + payoff.__all__ + presets.__all__)
