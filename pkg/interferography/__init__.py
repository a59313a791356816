from .core import (QubitState, DensityMatrix, QuditPureState, operator2,
                   expect, subspace_moments, fidelity, entanglement_entropy)
from .optics import (PreparationSetting, InterferometerConfig, Interferogram,
                     prepare_qubit, synthesize, synthesize_series, hwp_sweep)
from .fringe import (FringeParams, FringeEstimate, Calibration, fit_slice,
                     aggregate, estimate, calibrate)
from .reconstruct import (ReconstructionResult, invert_qubit, invert_qudit,
                          reconstruct_pure_assumed,
                          entanglement_from_marginal)
from .bench import ShotBudget, simulate_qst, compare, settings_table
from .exceptions import QSIError

__all__ = [
    'QubitState',
    'DensityMatrix',
    'QuditPureState',
    'operator2',
    'expect',
    'subspace_moments',
    'fidelity',
    'entanglement_entropy',
    'PreparationSetting',
    'InterferometerConfig',
    'Interferogram',
    'prepare_qubit',
    'synthesize',
    'synthesize_series',
    'hwp_sweep',
    'FringeParams',
    'FringeEstimate',
    'Calibration',
    'fit_slice',
    'aggregate',
    'estimate',
    'calibrate',
    'ReconstructionResult',
    'invert_qubit',
    'invert_qudit',
    'reconstruct_pure_assumed',
    'entanglement_from_marginal',
    'ShotBudget',
    'simulate_qst',
    'compare',
    'settings_table',
    'QSIError',
]

from ._version import __version__
