"""
Inversion of fringe observables into quantum states: mixed qubits, pure
qudits through the sequential subspace chain, and the entanglement of pure
two-qubit states from one marginal.
"""
import logging
from collections import namedtuple

import numpy as np
from scipy.optimize import least_squares, approx_fprime

from interferography.core import (QubitState, QuditPureState, DensityMatrix,
                                  density_matrix, qudit_amplitudes, fidelity,
                                  entanglement_entropy)
from interferography.exceptions import (ReconstructionError, DimensionError,
                                        IllConditionedChainError)
from interferography.utils import wrap_phase


__all__ = ['ReconstructionResult', 'Fidelities', 'invert_qubit',
           'reconstruct_pure_assumed', 'invert_qudit',
           'entanglement_from_marginal', 'reconstruct_mixed_fidelity']

logger = logging.getLogger(__name__)

POLE_SIN = 1e-3
IBAR_MIN, IBAR_MAX = 0.25, 0.5
# Below this the qudit chain has no amplitude left to resolve.
DOWNSTREAM_TOL = 1e-9
CLAMP_TOL = 1e-9
# Relative squared mismatch below which a chain reproduces its moments.
CONSISTENT_TOL = 1e-12
REFINE_MODES = ('auto', 'always', 'never')
# Finite-difference step for fidelity uncertainties.
FIDELITY_STEP = 1e-6


class ReconstructionResult(object):

    def __init__(self, state, rho=None, flags=(), sigmas=None,
                 fidelity_vs_target=None, fidelity_std=None):
        """
        A reconstructed state and the bookkeeping of how it was obtained.

        Args:
            state (QubitState, QuditPureState): The reconstructed state.
            rho (DensityMatrix): Its density matrix; derived from state if
                None.
            flags (iterable): Every projection or fallback applied, e.g.
                'mu-clamped', 'avg-intensity-clamped',
                'phase-indeterminate'.
            sigmas (dict): First-order uncertainties keyed by parameter.
            fidelity_vs_target (float): Filled by with_target().
            fidelity_std (float): First-order uncertainty of
                fidelity_vs_target; filled by with_target().
        """
        if rho is None:
            if isinstance(state, QuditPureState):
                rho = DensityMatrix.from_state_vector(qudit_amplitudes(state))
            else:
                rho = density_matrix(state)
        self.state = state
        self.rho = rho
        self.flags = frozenset(flags)
        self.sigmas = dict(sigmas or {})
        self.fidelity_vs_target = fidelity_vs_target
        self.fidelity_std = fidelity_std

    @property
    def kind(self):
        return 'qudit' if isinstance(self.state, QuditPureState) else 'qubit'

    def with_target(self, target):
        ''' Copy of the result with its fidelity against `target` and the
        uncertainty of that fidelity propagated from the sigmas. '''
        return ReconstructionResult(self.state, self.rho, self.flags,
                                    self.sigmas, fidelity(self.rho, target),
                                    self.fidelity_std_vs(target))

    def fidelity_std_vs(self, target, step=FIDELITY_STEP):
        """
        Delta-method standard deviation of the fidelity to `target`.

        The fidelity is differentiated numerically with respect to each
        state parameter, stepping inside the parameter's range, and the
        parameters are taken as uncorrelated.

        Returns:
            A float; nan if a needed sigma is not finite.
        """
        values, lower, upper, build = _parameterization(self.state)
        names = _parameter_names(self.state)
        var = 0.0
        for i, name in enumerate(names):
            sigma = self.sigmas.get(name, 0.0)
            if sigma == 0:
                continue
            up, down = values.copy(), values.copy()
            up[i] = min(values[i] + step, upper[i])
            down[i] = max(values[i] - step, lower[i])
            grad = (fidelity(build(up), target) -
                    fidelity(build(down), target)) / (up[i] - down[i])
            if grad == 0:
                continue
            if not np.isfinite(sigma):
                return float('nan')
            var += (grad * sigma) ** 2
        return float(np.sqrt(var))

    def to_json(self):
        data = {'kind': self.kind, 'rho': self.rho.to_json(),
                'flags': sorted(self.flags),
                'sigmas': {k: float(v) for k, v in self.sigmas.items()},
                'fidelity_vs_target': self.fidelity_vs_target,
                'fidelity_std': self.fidelity_std}
        if self.kind == 'qudit':
            data['thetas'] = list(self.state.thetas)
            data['phis'] = list(self.state.phis)
        else:
            data.update(self.state.to_json())
        return data

    def __repr__(self):
        return 'ReconstructionResult(%r, flags=%s)' % (self.state,
                                                       sorted(self.flags))


Fidelities = namedtuple('Fidelities', ['pure_assumed', 'mixed',
                                       'pure_assumed_std', 'mixed_std'])


def _parameter_names(state):
    if isinstance(state, QuditPureState):
        return ['theta_%d' % k for k in range(1, state.dim)] + \
            ['phi_%d' % k for k in range(1, state.dim)]
    return ['theta', 'phi', 'mu']


def _parameterization(state):
    ''' Flat parameters of a state, their bounds, and the map from
    parameters back to a density matrix. '''
    if isinstance(state, QuditPureState):
        n = state.dim - 1
        values = np.r_[state.thetas, state.phis]
        lower = np.r_[np.zeros(n), np.full(n, -np.inf)]
        upper = np.r_[np.full(n, np.pi), np.full(n, np.inf)]

        def build(p):
            return DensityMatrix.from_state_vector(
                qudit_amplitudes(QuditPureState(p[:n], p[n:])))
    else:
        values = np.array(state, dtype=float)
        lower = np.array([0.0, -np.inf, 0.0])
        upper = np.array([np.pi, np.inf, 1.0])

        def build(p):
            return density_matrix(QubitState(*p))
    return values, lower, upper, build


def _check_estimate(est):
    if est.n_slices_used < 1:
        raise ReconstructionError("Estimate holds no fitted slices.")
    if 'unnormalized' in est.flags:
        raise ReconstructionError("Estimate is unnormalized; fit it with a "
                                  "norm reference first.")


def _theta_from_intensity(est, flags):
    avg = est.avg_intensity
    if avg < IBAR_MIN or avg > IBAR_MAX:
        logger.warning("Average intensity %.6g clamped to [1/4, 1/2].", avg)
        flags.add('avg-intensity-clamped')
        avg = min(max(avg, IBAR_MIN), IBAR_MAX)
    theta = float(np.arccos(np.clip(8 * avg - 3, -1.0, 1.0)))
    sin_theta = np.sin(theta)
    sigma = 8 * est.avg_intensity_std / max(sin_theta, POLE_SIN)
    return theta, min(sigma, np.pi)


def invert_qubit(est):
    """
    Mixed-qubit state from (phase shift, visibility, average intensity).

    theta = arccos(8 Ibar - 3), phi = Phi, mu = V (3 + cos theta) /
    (2 sin theta) capped at 1. Near the poles (sin theta < 1e-3) phi and mu
    are undefined and reported as 0 and 1.

    Args:
        est (FringeEstimate): Normalized observables.

    Returns:
        A ReconstructionResult with sigmas for theta, phi and mu.
    """
    _check_estimate(est)
    flags = set(f for f in est.flags if f == 'phase-indeterminate')
    theta, sigma_theta = _theta_from_intensity(est, flags)
    sin_theta, cos_theta = np.sin(theta), np.cos(theta)
    if sin_theta < POLE_SIN:
        flags.add('phase-indeterminate')
        state = QubitState(theta, 0.0, 1.0)
        return ReconstructionResult(state, flags=flags, sigmas={
            'theta': sigma_theta, 'phi': np.pi, 'mu': 0.0})

    mu = est.visibility * (3 + cos_theta) / (2 * sin_theta)
    if mu > 1:
        if mu > 1 + CLAMP_TOL:
            logger.warning("Recovered mu=%.6g exceeds 1; using 1.", mu)
            flags.add('mu-clamped')
        mu = 1.0
    dmu_dv = (3 + cos_theta) / (2 * sin_theta)
    dmu_dtheta = -est.visibility * (1 + 3 * cos_theta) / (2 * sin_theta ** 2)
    sigma_mu = np.hypot(dmu_dv * est.visibility_std, dmu_dtheta * sigma_theta)
    state = QubitState(theta, est.phase_shift, mu)
    return ReconstructionResult(state, flags=flags, sigmas={
        'theta': sigma_theta, 'phi': est.phase_std, 'mu': float(sigma_mu)})


def reconstruct_pure_assumed(est):
    ''' Pure state from the average intensity and phase shift alone
    (mu forced to 1); the visibility is not used. '''
    _check_estimate(est)
    flags = set(f for f in est.flags if f == 'phase-indeterminate')
    theta, sigma_theta = _theta_from_intensity(est, flags)
    phi = est.phase_shift
    if np.sin(theta) < POLE_SIN:
        flags.add('phase-indeterminate')
        phi = 0.0
    return ReconstructionResult(QubitState(theta, phi, 1.0), flags=flags,
                                sigmas={'theta': sigma_theta,
                                        'phi': est.phase_std, 'mu': 0.0})


def entanglement_from_marginal(est):
    ''' Entanglement entropy (bits) of a pure two-qubit state from the
    fringe observables of one of its qubits. '''
    return entanglement_entropy(invert_qubit(est).state)


def reconstruct_mixed_fidelity(est, target):
    ''' Fidelity to `target` of both the pure-assumed and the mixed-qubit
    reconstruction of one estimate. '''
    pure = reconstruct_pure_assumed(est).with_target(target)
    mixed = invert_qubit(est).with_target(target)
    return Fidelities(pure.fidelity_vs_target, mixed.fidelity_vs_target,
                      pure.fidelity_std, mixed.fidelity_std)


# -- Qudits ------------------------------------------------------------------

def _measured_moments(ests, scales):
    ''' Per subspace: S_k = norm_sq + m_pi, M_k = |m_sigma|, Phi_k and their
    standard errors, all in absolute units. '''
    rows = []
    for est, scale in zip(ests, scales):
        level = 4 * est.avg_intensity * scale
        amp = 0.5 * est.visibility * level
        sigma_level = 4 * est.avg_intensity_std * scale
        sigma_amp = np.hypot(0.5 * level * est.visibility_std,
                             0.5 * est.visibility * sigma_level)
        rows.append((level, amp, est.phase_shift, sigma_level,
                     np.hypot(sigma_amp, amp * min(est.phase_std, np.pi))))
    return np.array(rows)


def _predicted(params, dim):
    ''' Forward map (S_k, Re m_sigma, Im m_sigma) for k = 1..d-1, without
    range checks so finite differences may step past the bounds. '''
    thetas, phis = params[:dim - 1], params[dim - 1:]
    c, s = np.cos(thetas / 2), np.sin(thetas / 2)
    c_next = np.r_[c[1:], 1.0]
    xi = np.r_[1.0, np.cumprod(s ** 2)[:-1]]
    level = xi * (2 * c ** 2 + s ** 2 * c_next ** 2)
    m_sigma = xi * 0.5 * np.exp(1j * phis) * np.sin(thetas) * c_next
    return np.column_stack([level, m_sigma.real, m_sigma.imag]).ravel()


def _observed(moments):
    level, amp, phase = moments[:, 0], moments[:, 1], moments[:, 2]
    return np.column_stack([level, amp * np.cos(phase),
                            amp * np.sin(phase)]).ravel()


def _chain(u, w, moments, dim):
    ''' Completes the polar angles from the first two, walking k = 2..d-2.
    Returns the angles and whether an arccos argument was clamped. '''
    clamped = False
    thetas = [2 * np.arccos(np.sqrt(u))]
    if dim > 2:
        thetas.append(2 * np.arccos(np.sqrt(w)))
    for k in range(2, dim - 1):
        s2 = np.prod(np.sin(np.array(thetas) / 2) ** 2)
        xi = s2 / np.sin(thetas[k - 1] / 2) ** 2 if s2 > 0 else 0.0
        theta_k = thetas[k - 1]
        if s2 < DOWNSTREAM_TOL:
            thetas.extend([0.0] * (dim - 1 - len(thetas)))
            break
        if np.sin(theta_k) < POLE_SIN:
            raise IllConditionedChainError(
                "sin(theta_%d)=%.3g leaves theta_%d undetermined." %
                (k, np.sin(theta_k), k + 1), k=k)
        c_next = moments[k - 1, 1] / (xi * np.sin(theta_k / 2) *
                                      np.cos(theta_k / 2))
        if c_next > 1 + CLAMP_TOL or c_next < -CLAMP_TOL:
            clamped = True
        thetas.append(2 * np.arccos(np.clip(c_next, 0.0, 1.0)))
    return thetas, clamped


def _first_subspace_roots(level, amp, dim):
    ''' Candidate (u, w) = (cos^2(theta_1/2), cos^2(theta_2/2)) solving
    S = 2u + (1-u) w and M^2 = u (1-u) w, and whether a clamp was needed. '''
    if dim == 2:
        u = level - 1
        clamped = u < -CLAMP_TOL or u > 1 + CLAMP_TOL
        return [(min(max(u, 0.0), 1.0), 1.0)], clamped
    disc = level ** 2 - 8 * amp ** 2
    clamped = disc < -CLAMP_TOL
    disc = max(disc, 0.0)
    valid, invalid = [], []
    for u in sorted(set([(level - np.sqrt(disc)) / 4,
                         (level + np.sqrt(disc)) / 4])):
        w = 1.0 if u >= 1 else (level - 2 * u) / (1 - u)
        ok = -CLAMP_TOL <= u <= 1 + CLAMP_TOL and \
            -CLAMP_TOL <= w <= 1 + CLAMP_TOL
        root = (min(max(u, 0.0), 1.0), min(max(w, 0.0), 1.0))
        (valid if ok else invalid).append(root)
    if not valid:
        return invalid, True
    return valid, clamped


def _phis(ests):
    return [0.0 if 'phase-indeterminate' in e.flags else e.phase_shift
            for e in ests]


def invert_qudit(ests, scales=None, refine='auto', dim=None):
    """
    Pure qudit from the d-1 subspace interferograms, solved sequentially.

    Subspace 1 fixes (theta_1, theta_2) jointly from its level and fringe
    amplitude (a quadratic with up to two roots; the root most consistent
    with the remaining subspaces is kept). Each later subspace k fixes
    theta_(k+1) from its fringe amplitude, and phi_k = Phi_k throughout.

    Args:
        ests (list): FringeEstimate for subspaces k = 1..d-1, in order.
        scales (list): Per-interferogram multipliers converting the
            normalized average intensity to absolute units; 1 by default.
        refine (str): 'auto' refines jointly when a clamp fired, 'always'
            or 'never'.
        dim (int): Expected dimension, checked against len(ests) + 1.

    Returns:
        A ReconstructionResult holding a QuditPureState.
    """
    ests = list(ests)
    if not ests:
        raise DimensionError("A qudit needs at least one estimate.")
    d = len(ests) + 1
    if dim is not None and dim != d:
        raise DimensionError("Expected %d estimates for d=%d, got %d." %
                             (dim - 1, dim, len(ests)))
    if refine not in REFINE_MODES:
        raise ReconstructionError("refine must be one of %s." %
                                  ', '.join(REFINE_MODES))
    scales = [1.0] * len(ests) if scales is None else list(scales)
    if len(scales) != len(ests):
        raise DimensionError("Got %d scales for %d estimates." %
                             (len(scales), len(ests)))
    for est in ests:
        _check_estimate(est)

    moments = _measured_moments(ests, scales)
    observed = _observed(moments)
    phis = _phis(ests)
    roots, clamped = _first_subspace_roots(moments[0, 0], moments[0, 1], d)

    best, ill = None, None
    for u, w in roots:
        try:
            thetas, chain_clamped = _chain(u, w, moments, d)
        except IllConditionedChainError as e:
            ill = e
            continue
        params = np.concatenate([thetas, phis])
        cost = np.sum((_predicted(params, d) - observed) ** 2)
        if best is None or cost < best[0]:
            best = (cost, params, chain_clamped)
    # the skipped root may be the true one if the survivor does not fit
    if ill is not None and (best is None or best[0] > CONSISTENT_TOL *
                            (1 + np.sum(observed ** 2))):
        raise ill
    cost, params, chain_clamped = best
    flags = set()
    if clamped or chain_clamped:
        logger.warning("Qudit chain clamped an out-of-range moment.")
        flags.add('moment-clamped')

    if refine == 'always' or (refine == 'auto' and flags):
        lower = np.r_[np.zeros(d - 1), np.full(d - 1, -np.inf)]
        upper = np.r_[np.full(d - 1, np.pi), np.full(d - 1, np.inf)]
        res = least_squares(lambda p: _predicted(p, d) - observed,
                            np.clip(params, lower, upper), bounds=(lower,
                                                                   upper),
                            method='trf', ftol=1e-12, xtol=1e-12,
                            gtol=1e-12, max_nfev=2000)
        if 2 * res.cost <= cost:
            params = res.x
            flags.add('refined')

    sigmas = _qudit_sigmas(params, moments, d)
    state = QuditPureState(params[:d - 1], wrap_phase(params[d - 1:]))
    return ReconstructionResult(state, flags=flags, sigmas=sigmas)


def _qudit_sigmas(params, moments, dim):
    # delta method through the pseudo-inverse of the forward moment map
    jac = approx_fprime(params, lambda p: _predicted(p, dim), 1e-7)
    sigma_obs = np.repeat(moments[:, 3:], [1, 2], axis=1).ravel()
    pinv = np.linalg.pinv(jac)
    cov = (pinv * sigma_obs ** 2) @ pinv.T
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    names = ['theta_%d' % k for k in range(1, dim)] + \
        ['phi_%d' % k for k in range(1, dim)]
    return dict(zip(names, [float(e) for e in errs]))
