"""Quantum limits to laser linewidth: gain models in the Fock basis, master
equation dynamics, closed-form limits and quantum-jump trajectories."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    LaserLimitsError, InputError, NumericalError, DomainError, ModelMismatch, SizeGuard,
    DegenerateInput, MissingField, GridError, InsufficientData, TruncationError,
    ConvergenceError, StiffnessError, NonTermination,
)
from .fock import FockSpace, PhotonDistribution, PureState, coherent_state, moments  # noqa: E402
from .models import LaserModel, ModelKind, make_model, gain_coefficient, sideband_block, full_generator  # noqa: E402
from .dynamics import (  # noqa: E402
    stationary_distribution, g1_series, power_spectrum, slowest_decay_rate, measure_linewidth,
)
from .diagnostics import (  # noqa: E402
    predicted_linewidth, micromaser_linewidth, gain_ratio, gain_decay_contribution,
    LimitInputs, schawlow_townes_chain, uncertainty_chain,
)
from .trajectories import TrajectoryConfig, run_trajectory, run_ensemble, ensemble_stats  # noqa: E402
