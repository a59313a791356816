"""
Circular statistics for fringe phases.
"""

import numpy as np

from interferography.utils import wrap_phase


def mean_resultant_vector(theta, weights=None):
    """Mean resultant vector of a set of angles.

    Args:
        theta (array-like): Angles in radians.
        weights (array-like): Optional non-negative weights.

    Returns:
        (angle, length): the mean direction wrapped to (-pi, pi] and the
        mean resultant length R in [0, 1].
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        raise ValueError("Cannot average an empty set of angles.")
    if weights is None:
        z = np.mean(np.exp(1j * theta))
    else:
        weights = np.asarray(weights, dtype=float)
        z = np.sum(weights * np.exp(1j * theta)) / np.sum(weights)
    return wrap_phase(np.angle(z)), float(min(abs(z), 1.0))


def mean(theta, weights=None):
    return mean_resultant_vector(theta, weights)[0]


def mean_length(theta, weights=None):
    return mean_resultant_vector(theta, weights)[1]


def std(theta, weights=None):
    """Circular standard deviation sqrt(-2 ln R) (Mardia, 1972); unbounded,
    inf for a uniform spread."""
    r = mean_length(theta, weights)
    if r <= 0:
        return np.inf
    return float(np.sqrt(max(-2 * np.log(r), 0.0)))
