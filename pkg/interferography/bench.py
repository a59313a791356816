"""
Standard Pauli tomography as a baseline, and the QSI-versus-QST comparison
at an equal photon budget.
"""
import logging
from collections import namedtuple

import numpy as np
import pandas as pd

from interferography.core import QubitState, DensityMatrix, fidelity
from interferography.exceptions import ConfigError, QSIError
from interferography.fringe import Calibration, estimate
from interferography.optics import synthesize_series
from interferography.reconstruct import invert_qubit


__all__ = ['ShotBudget', 'QSTEstimate', 'PAULI', 'qst_probabilities',
           'simulate_qst', 'qsi_config_for_budget', 'compare',
           'settings_table']

logger = logging.getLogger(__name__)

PAULI = np.array([[[0, 1], [1, 0]],
                  [[0, -1j], [1j, 0]],
                  [[1, 0], [0, -1]]], dtype=complex)
QST_SETTINGS = 3
QSI_SETTINGS = 1


class ShotBudget(namedtuple('ShotBudget', ['total_shots', 'settings'])):
    """
    Photons available to one reconstruction.

    Args:
        total_shots (int): Total detected photons; None for the
            infinite-shot limit.
        settings (int): Measurement settings the photons are split across.
    """
    __slots__ = ()

    def __new__(cls, total_shots, settings=QST_SETTINGS):
        settings = int(settings)
        if settings < 1:
            raise ConfigError("A budget needs at least one setting.")
        if total_shots is not None:
            total_shots = int(total_shots)
            if total_shots < settings:
                raise ConfigError("%d shots cannot cover %d settings." %
                                  (total_shots, settings))
        return super(ShotBudget, cls).__new__(cls, total_shots, settings)

    @property
    def per_setting(self):
        if self.total_shots is None:
            return None
        return self.total_shots // self.settings


QSTEstimate = namedtuple('QSTEstimate', ['rho', 'bloch', 'flags'])


def qst_probabilities(rho):
    ''' Probability of the +1 outcome of sigma_x, sigma_y and sigma_z. '''
    if not isinstance(rho, DensityMatrix):
        rho = DensityMatrix(rho) if np.ndim(rho) == 2 else \
            QubitState(*rho).density_matrix()
    r = np.real(np.einsum('ij,aji->a', rho.entries, PAULI))
    return np.clip((1 + r) / 2, 0.0, 1.0)


def simulate_qst(state, budget, seed=0):
    """
    Pauli tomography of one qubit by linear inversion.

    Each of sigma_x, sigma_y, sigma_z is measured budget.per_setting times;
    the Bloch vector is read off the outcome frequencies and rescaled to
    unit length if the noise pushed it outside the ball.

    Args:
        state (QubitState, DensityMatrix): The true state.
        budget (ShotBudget): Photon budget; total_shots=None uses the exact
            probabilities.
        seed (int): Seed of the outcome sampler.

    Returns:
        A QSTEstimate (rho, bloch vector, flags).
    """
    rho = state if isinstance(state, DensityMatrix) else \
        QubitState(*state).density_matrix()
    probs = qst_probabilities(rho)
    flags = set()
    if budget.total_shots is None:
        r = 2 * probs - 1
    else:
        n = budget.per_setting
        if n < 1:
            raise ConfigError("No shots left for a tomography setting.")
        rng = np.random.default_rng(seed)
        r = 2 * rng.binomial(n, probs) / n - 1
    length = np.linalg.norm(r)
    if length > 1:
        r = r / length
        flags.add('bloch-rescaled')
    entries = 0.5 * (np.eye(2) + np.einsum('a,aij->ij', r, PAULI))
    return QSTEstimate(DensityMatrix(entries), r, frozenset(flags))


def qsi_config_for_budget(cfg, total_shots):
    ''' Config whose acquisition of an Ibar = 1/2 state detects
    `total_shots` signal photons across all of its images. '''
    per_image = cfg.n_slices * cfg.envelope().sum()
    return cfg.replace(peak_counts=float(total_shots) /
                       (cfg.n_images * per_image))


def _compare_cell(task):
    ''' One (state, trial) cell: fidelity of both methods. '''
    state, budget, cfg, seed = task
    qst = simulate_qst(state, budget, seed=seed)
    row = {'qst': fidelity(qst.rho, state), 'qst_flags': qst.flags}
    qsi_cfg = qsi_config_for_budget(cfg, budget.total_shots) \
        if budget.total_shots is not None else cfg.replace(shot_noise=False,
                                                           read_noise_sigma=0)
    try:
        est = estimate(synthesize_series(state, qsi_cfg, seed=seed),
                       Calibration.ideal(qsi_cfg))
        result = invert_qubit(est)
        row['qsi'] = fidelity(result.rho, state)
        row['qsi_flags'] = result.flags | frozenset(est.flags)
    except QSIError as e:
        logger.warning("QSI pipeline failed for %r (seed %d): %s", state,
                       seed, e)
        row['qsi'] = np.nan
        row['qsi_flags'] = frozenset(['pipeline-failed'])
    return row


def compare(states, budget, cfg, n_trials=10, seed=0, mapper=map):
    """
    Fidelity of QSI and Pauli QST for each state at the same photon count.

    Args:
        states (list): QubitStates to reconstruct.
        budget (ShotBudget): Total photons per reconstruction, shared by
            both methods; QST splits them across its three settings.
        cfg (InterferometerConfig): Interferometer settings; peak_counts
            is rescaled to the budget.
        n_trials (int): Independent repetitions per state.
        seed (int): Base seed; trial t uses seed + t.
        mapper (callable): map-like function, e.g. Pool.map, over cells.

    Returns:
        A pandas DataFrame with one row per (state, method).
    """
    budget = ShotBudget(budget.total_shots, QST_SETTINGS)
    tasks = [(QubitState(*s), budget, cfg, seed + t)
             for s in states for t in range(n_trials)]
    cells = list(mapper(_compare_cell, tasks))
    rows = []
    for i, state in enumerate(states):
        state = QubitState(*state)
        chunk = cells[i * n_trials:(i + 1) * n_trials]
        for method, settings in (('qsi', QSI_SETTINGS),
                                 ('qst', QST_SETTINGS)):
            fids = np.array([c[method] for c in chunk], dtype=float)
            flags = set()
            for c in chunk:
                flags |= c[method + '_flags']
            rows.append({'theta': state.theta, 'phi': state.phi,
                         'mu': state.mu, 'method': method,
                         'shots': budget.total_shots, 'settings': settings,
                         'fidelity_mean': np.nanmean(fids),
                         'fidelity_std': np.nanstd(fids),
                         'flags': ';'.join(sorted(flags))})
    return pd.DataFrame.from_records(rows, columns=[
        'theta', 'phi', 'mu', 'method', 'shots', 'settings',
        'fidelity_mean', 'fidelity_std', 'flags'])


def settings_table(dims=(2, 3, 4, 5)):
    ''' Measurement settings per dimension: QSI needs d-1 interferograms,
    full QST d^2-1 settings, pure-state QST 5d-7 observables. '''
    dims = [int(d) for d in np.atleast_1d(dims)]
    if any(d < 2 for d in dims):
        raise ConfigError("Dimensions must be at least 2.")
    return pd.DataFrame({'d': dims,
                         'qsi': [d - 1 for d in dims],
                         'qst': [d * d - 1 for d in dims],
                         'pure_qst': [5 * d - 7 for d in dims]},
                        columns=['d', 'qsi', 'qst', 'pure_qst'])
