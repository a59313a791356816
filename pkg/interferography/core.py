"""
State representations, operators and metrics shared by the forward model
and the reconstruction.

Basis convention: |0> is horizontal and |1> is vertical polarization.
"""
from collections import namedtuple

import numpy as np
from scipy import linalg, stats

from interferography.exceptions import StateError, DimensionError
from interferography.utils import wrap_phase


__all__ = ['QubitState', 'DensityMatrix', 'QuditPureState', 'Operator2',
           'SubspaceMoments', 'operator2', 'density_matrix', 'expect',
           'qudit_amplitudes', 'subspace_moments', 'fidelity',
           'entanglement_entropy', 'bloch_vector', 'purity',
           'reduced_marginal', 'SIGMA_MINUS', 'SIGMA_PLUS', 'PI0', 'SIGMA_X']


HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
NORM_TOL = 1e-12
# Inputs are accepted this far outside [0, pi] / [0, 1] and clipped back.
RANGE_SLACK = 1e-9


def _check_range(name, value, low, high):
    value = float(value)
    if not np.isfinite(value):
        raise StateError("%s must be finite, got %r." % (name, value))
    if value < low - RANGE_SLACK or value > high + RANGE_SLACK:
        raise StateError("%s=%r is outside [%g, %g]." %
                         (name, value, low, high))
    return min(max(value, low), high)


class QubitState(namedtuple('QubitState', ['theta', 'phi', 'mu'])):
    """
    A possibly mixed qubit in Bloch coordinates.

    Args:
        theta (float): Polar angle in [0, pi].
        phi (float): Azimuthal angle; any finite value is wrapped to
            (-pi, pi].
        mu (float): Length of the transverse Bloch component relative to a
            pure state, in [0, 1]. mu=1 for pure states.
    """
    __slots__ = ()

    def __new__(cls, theta, phi=0.0, mu=1.0):
        theta = _check_range('theta', theta, 0.0, np.pi)
        if not np.isfinite(phi):
            raise StateError("phi must be finite, got %r." % phi)
        mu = _check_range('mu', mu, 0.0, 1.0)
        return super(QubitState, cls).__new__(cls, theta, wrap_phase(phi), mu)

    @classmethod
    def from_state_vector(cls, psi):
        ''' Returns the pure state (mu=1) for a 2-component state vector,
        global phase removed. '''
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != (2,):
            raise DimensionError("Expected a 2-component state vector, got "
                                 "shape %s." % (psi.shape,))
        norm = np.linalg.norm(psi)
        if norm == 0:
            raise StateError("Cannot build a state from the zero vector.")
        a, b = psi / norm
        theta = 2 * np.arctan2(abs(b), abs(a))
        if abs(a) < NORM_TOL or abs(b) < NORM_TOL:
            phi = 0.0
        else:
            phi = np.angle(b) - np.angle(a)
        return cls(theta, phi, 1.0)

    @classmethod
    def from_density_matrix(cls, rho):
        ''' Inverts the Bloch parameterization of a 2x2 density matrix. At
        the poles phi and mu are undefined and reported as 0 and 1. '''
        if not isinstance(rho, DensityMatrix):
            rho = DensityMatrix(rho)
        if rho.dim != 2:
            raise DimensionError("Expected a qubit density matrix, got "
                                 "dim=%d." % rho.dim)
        m = rho.entries
        theta = np.arccos(np.clip((m[0, 0] - m[1, 1]).real, -1.0, 1.0))
        sin_theta = np.sin(theta)
        if sin_theta < PSD_TOL:
            return cls(theta, 0.0, 1.0)
        off = m[1, 0]
        mu = min(2 * abs(off) / sin_theta, 1.0)
        phi = np.angle(off) if abs(off) > 0 else 0.0
        return cls(theta, phi, mu)

    def density_matrix(self):
        return density_matrix(self)

    def bloch_vector(self):
        return bloch_vector(self)

    def to_json(self):
        return {'theta': self.theta, 'phi': self.phi, 'mu': self.mu}

    @classmethod
    def from_json(cls, data):
        return cls(data['theta'], data.get('phi', 0.0), data.get('mu', 1.0))


class DensityMatrix(object):

    def __init__(self, entries, validate=True):
        """
        A d x d complex Hermitian, unit-trace, positive semidefinite
        operator. The entries are copied and frozen.

        Args:
            entries (array-like): Square complex matrix.
            validate (bool): If True (default), check Hermiticity, trace
                and positivity and raise StateError on violation.
        """
        entries = np.array(entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or \
           entries.shape[0] < 1:
            raise DimensionError("A density matrix must be square, got "
                                 "shape %s." % (entries.shape,))
        entries.setflags(write=False)
        self.entries = entries
        if validate:
            self.validate()

    @property
    def dim(self):
        return self.entries.shape[0]

    def validate(self):
        m = self.entries
        if not np.all(np.isfinite(m)):
            raise StateError("Density matrix has non-finite entries.")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise StateError("Density matrix is not Hermitian.")
        trace = np.trace(m)
        if abs(trace - 1) > TRACE_TOL:
            raise StateError("Density matrix trace is %r, not 1." % trace)
        if np.min(self.eigenvalues()) < -PSD_TOL:
            raise StateError("Density matrix has a negative eigenvalue "
                             "(%g)." % np.min(self.eigenvalues()))
        return True

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.entries)

    def purity(self):
        return purity(self)

    def is_pure(self, tol=PSD_TOL):
        return abs(self.purity() - 1) < tol

    @classmethod
    def from_state_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    def to_json(self):
        return {'dim': self.dim, 're': self.entries.real.tolist(),
                'im': self.entries.imag.tolist()}

    @classmethod
    def from_json(cls, data):
        entries = np.array(data['re']) + 1j * np.array(data['im'])
        if entries.shape != (data['dim'], data['dim']):
            raise DimensionError("Density matrix JSON declares dim=%d but "
                                 "holds a %s array." %
                                 (data['dim'], entries.shape))
        return cls(entries)

    def __repr__(self):
        return 'DensityMatrix(dim=%d)' % self.dim


class QuditPureState(namedtuple('QuditPureState', ['thetas', 'phis'])):
    """
    A pure qudit in polar-spherical angles.

    Args:
        thetas (sequence): d-1 polar angles, each in [0, pi].
        phis (sequence): d-1 relative phases, wrapped to (-pi, pi].
    """
    __slots__ = ()

    def __new__(cls, thetas, phis):
        thetas = tuple(_check_range('theta_%d' % (i + 1), t, 0.0, np.pi)
                       for i, t in enumerate(np.ravel(thetas)))
        phis = np.ravel(phis)
        if len(thetas) < 1 or len(thetas) != len(phis):
            raise DimensionError("A qudit needs d-1 >= 1 thetas and as many "
                                 "phis; got %d and %d." %
                                 (len(thetas), len(phis)))
        if not np.all(np.isfinite(phis)):
            raise StateError("Qudit phases must be finite.")
        phis = tuple(float(p) for p in wrap_phase(phis))
        return super(QuditPureState, cls).__new__(cls, thetas, phis)

    @property
    def dim(self):
        return len(self.thetas) + 1

    @classmethod
    def from_amplitudes(cls, psi):
        ''' Angle vector of a state vector; where the remaining tail of the
        vector vanishes the undefined angles are set to 0. '''
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        d = len(psi)
        if d < 2:
            raise DimensionError("A qudit needs d >= 2.")
        thetas, phis = [], []
        # phase accumulated by the prefactor of the current amplitude
        acc = None
        for k in range(d - 1):
            tail = np.linalg.norm(psi[k:])
            if tail < NORM_TOL:
                thetas.append(0.0)
                phis.append(0.0)
                continue
            thetas.append(2 * np.arccos(np.clip(abs(psi[k]) / tail, 0, 1)))
            if acc is None and abs(psi[k]) > NORM_TOL:
                acc = np.angle(psi[k])
            if abs(psi[k + 1]) > NORM_TOL:
                phis.append(0.0 if acc is None
                            else np.angle(psi[k + 1]) - acc)
                acc = np.angle(psi[k + 1])
            else:
                phis.append(0.0)
        return cls(thetas, phis)

    def amplitudes(self):
        return qudit_amplitudes(self)

    def to_json(self):
        return {'dim': self.dim, 'thetas': list(self.thetas),
                'phis': list(self.phis)}

    @classmethod
    def from_json(cls, data):
        state = cls(data['thetas'], data['phis'])
        if 'dim' in data and data['dim'] != state.dim:
            raise DimensionError("Qudit JSON declares dim=%d but holds %d "
                                 "angles." % (data['dim'], len(state.thetas)))
        return state


class Operator2(namedtuple('Operator2', ['entries', 'role'])):
    ''' A 2x2 complex operator tagged with the role it plays in the
    interferometer (a ladder operator, an arm element or a waveplate). '''
    __slots__ = ()

    def __new__(cls, entries, role='custom'):
        entries = np.array(entries, dtype=complex)
        if entries.shape != (2, 2):
            raise DimensionError("Operator2 needs a 2x2 matrix, got %s." %
                                 (entries.shape,))
        entries.setflags(write=False)
        return super(Operator2, cls).__new__(cls, entries, role)

    def __matmul__(self, other):
        return Operator2(self.entries @ other.entries)


def _waveplate(retardance, angle):
    # Fast axis at `angle` from the vertical, i.e. pi/2 - angle from |H>.
    gamma = np.pi / 2 - angle
    c, s = np.cos(gamma), np.sin(gamma)
    rot = np.array([[c, s], [-s, c]])
    return rot.T @ np.diag([1, np.exp(1j * retardance)]) @ rot


def operator2(role, angle=None):
    """
    Builds the named 2x2 operator.

    Args:
        role (str): One of 'sigma_minus', 'sigma_plus', 'pi0', 'sigma_x',
            'hwp' or 'qwp'.
        angle (float): Fast-axis angle in radians, measured from the
            vertical; required for 'hwp' and 'qwp'.

    Returns:
        An Operator2.
    """
    fixed = {
        'sigma_minus': [[0, 1], [0, 0]],
        'sigma_plus': [[0, 0], [1, 0]],
        'pi0': [[1, 0], [0, 0]],
        'sigma_x': [[0, 1], [1, 0]],
    }
    if role in fixed:
        return Operator2(fixed[role], role)
    if role in ('hwp', 'qwp'):
        if angle is None:
            raise ValueError("A waveplate operator needs an angle.")
        retardance = np.pi if role == 'hwp' else np.pi / 2
        return Operator2(_waveplate(retardance, angle),
                         '%s(%.12g)' % (role, angle))
    raise ValueError("Unknown operator role '%s'." % role)


SIGMA_MINUS = operator2('sigma_minus')
SIGMA_PLUS = operator2('sigma_plus')
PI0 = operator2('pi0')
SIGMA_X = operator2('sigma_x')


def density_matrix(state):
    ''' Returns the 2x2 DensityMatrix of a QubitState. '''
    theta, phi, mu = state
    off = 0.5 * mu * np.exp(1j * phi) * np.sin(theta)
    entries = [[np.cos(theta / 2) ** 2, np.conj(off)],
               [off, np.sin(theta / 2) ** 2]]
    return DensityMatrix(entries)


def expect(op, rho):
    """
    Expectation value Tr(rho . op).

    Args:
        op (Operator2, array-like): The operator.
        rho (DensityMatrix, QubitState): The state.

    Returns:
        A complex number.
    """
    if isinstance(rho, QubitState):
        rho = density_matrix(rho)
    entries = op.entries if isinstance(op, Operator2) else np.asarray(op)
    if entries.shape != rho.entries.shape:
        raise DimensionError("Operator of shape %s does not act on a "
                             "dim-%d state." % (entries.shape, rho.dim))
    return complex(np.trace(rho.entries @ entries))


def qudit_amplitudes(state):
    ''' Amplitude vector of a QuditPureState; unit norm by construction. '''
    thetas, phis = np.array(state.thetas), np.array(state.phis)
    prefix = np.concatenate(
        [[1.0], np.cumprod(np.sin(thetas / 2) * np.exp(1j * phis))])
    amps = prefix * np.concatenate([np.cos(thetas / 2), [1.0]])
    norm = np.linalg.norm(amps)
    if abs(norm - 1) > NORM_TOL:
        raise StateError("Qudit amplitudes have norm %r." % norm)
    return amps


SubspaceMoments = namedtuple('SubspaceMoments',
                             ['m_sigma', 'm_pi', 'norm_sq'])


def subspace_moments(state, k):
    """
    Ladder and projector moments of the k-th two-dimensional subspace
    {k, k+1} of a pure qudit.

    Args:
        state (QuditPureState): The qudit.
        k (int): Subspace index, 1 <= k <= d-1.

    Returns:
        A SubspaceMoments tuple (m_sigma, m_pi, norm_sq).
    """
    d = state.dim
    if not 1 <= k <= d - 1:
        raise DimensionError("Subspace index k=%r out of range 1..%d." %
                             (k, d - 1))
    thetas = np.array(state.thetas)
    xi = np.prod(np.sin(thetas[:k - 1] / 2) ** 2)
    theta_k = thetas[k - 1]
    c_next = np.cos(thetas[k] / 2) if k < d - 1 else 1.0
    c_k, s_k = np.cos(theta_k / 2), np.sin(theta_k / 2)
    m_sigma = xi * 0.5 * np.exp(1j * state.phis[k - 1]) * np.sin(theta_k) \
        * c_next
    m_pi = xi * c_k ** 2
    norm_sq = xi * (c_k ** 2 + s_k ** 2 * c_next ** 2)
    return SubspaceMoments(complex(m_sigma), float(m_pi), float(norm_sq))


def _as_density_matrix(x):
    if isinstance(x, DensityMatrix):
        return x
    if isinstance(x, QubitState):
        return density_matrix(x)
    if isinstance(x, QuditPureState):
        return DensityMatrix.from_state_vector(qudit_amplitudes(x))
    x = np.asarray(x, dtype=complex)
    if x.ndim == 1:
        return DensityMatrix.from_state_vector(x)
    return DensityMatrix(x)


def fidelity(rho, target):
    """
    State fidelity in the probability convention: <psi|rho|psi> for a pure
    target, (Tr sqrt(sqrt(rho) target sqrt(rho)))^2 otherwise.

    Args:
        rho, target: DensityMatrix, QubitState, QuditPureState, state
            vector or matrix; converted and validated.

    Returns:
        A float in [0, 1].
    """
    rho, target = _as_density_matrix(rho), _as_density_matrix(target)
    if rho.dim != target.dim:
        raise DimensionError("Cannot compare dim-%d and dim-%d states." %
                             (rho.dim, target.dim))
    for m in (target, rho):
        if m.is_pure():
            other = rho if m is target else target
            vals, vecs = np.linalg.eigh(m.entries)
            psi = vecs[:, np.argmax(vals)]
            value = np.real(psi.conj() @ other.entries @ psi)
            return float(np.clip(value, 0.0, 1.0))
    root = linalg.sqrtm(rho.entries)
    value = np.real(np.trace(linalg.sqrtm(root @ target.entries @ root))) ** 2
    return float(np.clip(value, 0.0, 1.0))


def bloch_vector(state):
    theta, phi, mu = state
    return np.array([mu * np.sin(theta) * np.cos(phi),
                     mu * np.sin(theta) * np.sin(phi),
                     np.cos(theta)])


def purity(rho):
    ''' Tr(rho^2). '''
    rho = _as_density_matrix(rho)
    return float(np.real(np.trace(rho.entries @ rho.entries)))


def entanglement_entropy(reduced):
    """
    Von Neumann entropy, in bits, of a single-qubit marginal. For a pure
    bipartite state this is its entanglement entropy.

    Args:
        reduced (QubitState): The reduced state of one qubit.

    Returns:
        A float in [0, 1]; 1 for a Bell-state marginal.
    """
    r = min(np.linalg.norm(bloch_vector(reduced)), 1.0)
    return float(stats.entropy([(1 + r) / 2, (1 - r) / 2], base=2))


def reduced_marginal(psi_ab):
    ''' QubitState of the first qubit of a pure two-qubit vector ordered
    |00>, |01>, |10>, |11>. '''
    psi = np.asarray(psi_ab, dtype=complex)
    if psi.shape != (4,):
        raise DimensionError("Expected a 4-component two-qubit vector.")
    psi = (psi / np.linalg.norm(psi)).reshape(2, 2)
    rho_a = psi @ psi.conj().T
    return QubitState.from_density_matrix(rho_a)
