"""
Forward model: waveplate preparation, the interferometer intensity law and
synthetic interferogram images with counting and read noise.
"""
import json
import logging
import os
from collections import namedtuple
from os.path import exists

import numpy as np

from interferography.core import (QubitState, QuditPureState, operator2,
                                  subspace_moments)
from interferography.exceptions import ConfigError, StateError


__all__ = ['PreparationSetting', 'InterferometerConfig', 'Interferogram',
           'prepare_qubit', 'intensity_curve', 'qudit_intensity_curve',
           'theory_observables', 'qudit_theory_observables', 'synthesize',
           'synthesize_series', 'hwp_sweep', 'CONFIG_ENV_VAR']

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = 'QSI_DEFAULT_CONFIG'
# Phase-averaged intensity of |H>, the brightest state an HWP alone prepares.
IBAR_MAX = 0.5
MIN_FRINGE_PERIOD = 4.0
VERTICAL = np.array([0, 1], dtype=complex)


class PreparationSetting(namedtuple('PreparationSetting',
                                    ['alpha', 'beta', 'qwp_present'])):
    """
    Waveplate angles used to prepare a polarization qubit from a
    vertically polarized beam.

    Args:
        alpha (float): HWP fast-axis angle from the vertical, radians.
        beta (float): QWP fast-axis angle from the vertical, radians.
        qwp_present (bool): Whether the QWP is in the beam.
    """
    __slots__ = ()

    def __new__(cls, alpha, beta=0.0, qwp_present=True):
        if not (np.isfinite(alpha) and np.isfinite(beta)):
            raise StateError("Waveplate angles must be finite.")
        return super(PreparationSetting, cls).__new__(
            cls, float(alpha) % np.pi, float(beta) % np.pi, bool(qwp_present))


_CONFIG_DEFAULTS = [
    ('fringe_wavenumber', 2 * np.pi / 16),
    ('envelope_center', 128.0),
    ('envelope_sigma', 48.0),
    ('image_width', 256),
    ('n_slices', 100),
    ('n_images', 5),
    ('peak_counts', 1e4),
    ('background', 20.0),
    ('read_noise_sigma', 2.0),
    ('bs_imbalance', 0.0),
    ('phase_offset', 0.0),
    ('shot_noise', True),
    ('rng_seed', 0),
]
_INT_FIELDS = ('image_width', 'n_slices', 'n_images', 'rng_seed')


class InterferometerConfig(namedtuple('InterferometerConfig',
                                      [k for k, _ in _CONFIG_DEFAULTS])):
    """
    Acquisition geometry, detector and imperfection settings of the
    simulated interferometer. Every field has a default mirroring the
    standard acquisition of 100 slices x 5 images at 1e4 peak counts.

    Fields:
        fringe_wavenumber (float): k_f in radians/pixel.
        envelope_center (float): m_f in pixels.
        envelope_sigma (float): Gaussian envelope width in pixels.
        image_width (int): Columns per image.
        n_slices (int): Rows per image; every row is fitted as one slice.
        n_images (int): Images acquired per state.
        peak_counts (float): Expected photons at the envelope peak for the
            brightest HWP-only state.
        background (float): B_f in counts.
        read_noise_sigma (float): Gaussian read noise in counts.
        bs_imbalance (float): Visibility deficit in [0, 0.1] from the
            polarization dependent beam-splitter ratio.
        phase_offset (float): Instrument phase added to every fringe; the
            HWP-only calibration run removes it.
        shot_noise (bool): Draw Poisson counts; False gives noiseless means.
        rng_seed (int): Seed of the per-image random generators.
    """
    __slots__ = ()

    def __new__(cls, **kwargs):
        unknown = set(kwargs) - set(cls._fields)
        if unknown:
            raise ConfigError("Unknown interferometer config field(s): %s." %
                              ', '.join(sorted(unknown)))
        values = dict(_CONFIG_DEFAULTS)
        values.update(kwargs)
        for k in _INT_FIELDS:
            values[k] = int(values[k])
        for k, default in _CONFIG_DEFAULTS:
            if isinstance(default, float):
                values[k] = float(values[k])
        values['shot_noise'] = bool(values['shot_noise'])
        self = super(InterferometerConfig, cls).__new__(
            cls, *[values[k] for k in cls._fields])
        self.validate()
        return self

    def validate(self):
        if not 0 < self.fringe_wavenumber <= 2 * np.pi / MIN_FRINGE_PERIOD:
            raise ConfigError("Fringe period 2*pi/k_f must be at least %g "
                              "pixels; k_f=%r." %
                              (MIN_FRINGE_PERIOD, self.fringe_wavenumber))
        if self.image_width < 16:
            raise ConfigError("image_width must be at least 16 pixels.")
        if self.n_slices < 1 or self.n_images < 1:
            raise ConfigError("n_slices and n_images must be positive.")
        if self.peak_counts < 0 or self.background < 0 or \
           self.read_noise_sigma < 0:
            raise ConfigError("peak_counts, background and read_noise_sigma "
                              "must be non-negative.")
        if self.envelope_sigma <= 0:
            raise ConfigError("envelope_sigma must be positive.")
        if not 0 <= self.bs_imbalance <= 0.1:
            raise ConfigError("bs_imbalance must lie in [0, 0.1]; got %r." %
                              self.bs_imbalance)
        return True

    @classmethod
    def load(cls, source=None, **overrides):
        """
        Builds a config from a dict, a JSON file, or the defaults.

        Args:
            source (str, dict): A path to a JSON file, or a dict of fields.
                If None, the file named by $QSI_DEFAULT_CONFIG is read when
                that variable is set; otherwise defaults are used.
            overrides: Fields that take precedence over the source. None
                values are ignored.

        Returns:
            An InterferometerConfig.
        """
        if source is None:
            source = os.environ.get(CONFIG_ENV_VAR) or {}
        if isinstance(source, str):
            if not exists(source):
                raise ConfigError("No interferometer config found at '%s'."
                                  % source)
            with open(source, 'r') as fobj:
                source = json.load(fobj)
        values = dict(source)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def __getnewargs_ex__(self):
        return (), self.to_json()

    def replace(self, **overrides):
        values = self._asdict()
        values.update(overrides)
        return InterferometerConfig(**values)

    def to_json(self):
        return dict(self._asdict())

    @property
    def envelope_c(self):
        ''' c_f = 1 / (2 sigma^2). '''
        return 1.0 / (2 * self.envelope_sigma ** 2)

    def envelope(self):
        x = np.arange(self.image_width, dtype=float)
        return np.exp(-self.envelope_c * (x - self.envelope_center) ** 2)


class Interferogram(object):

    def __init__(self, pixels, config, state=None, setting=None, seed=None,
                 subspace=None, index=0):
        """
        One recorded (or synthesized) interference image with the metadata
        needed to reproduce it.

        Args:
            pixels (ndarray): n_slices x image_width array of counts.
            config (InterferometerConfig): Acquisition settings.
            state (QubitState, QuditPureState): The state imaged, if known.
            setting (PreparationSetting): Waveplate setting, if any.
            seed (int): Seed the image was drawn with.
            subspace (int): Qudit subspace index k, for qudit images.
            index (int): Position of the image within its acquisition.
        """
        pixels = np.array(pixels, dtype=float)
        if pixels.ndim != 2:
            raise ValueError("Interferogram pixels must be a 2D array.")
        if not np.all(np.isfinite(pixels)) or np.any(pixels < 0):
            raise ValueError("Interferogram pixels must be finite and "
                             "non-negative.")
        pixels.setflags(write=False)
        self.pixels = pixels
        self.config = config
        self.state = state
        self.setting = setting
        self.seed = seed
        self.subspace = subspace
        self.index = index

    @property
    def slices(self):
        return self.pixels

    def meta(self):
        ''' Sidecar dictionary: config, state tag and seed. '''
        state = None
        if isinstance(self.state, QuditPureState):
            state = dict(self.state.to_json(), kind='qudit',
                         subspace=self.subspace)
        elif isinstance(self.state, QubitState):
            state = dict(self.state.to_json(), kind='qubit')
        meta = {'config': self.config.to_json() if self.config else None,
                'state': state, 'seed': self.seed, 'index': self.index}
        if self.setting is not None:
            meta['setting'] = self.setting._asdict()
        return meta

    @classmethod
    def from_meta(cls, pixels, meta):
        config = meta.get('config')
        config = InterferometerConfig.load(config) if config else None
        state, subspace = meta.get('state'), None
        if state is not None:
            if state.get('kind') == 'qudit':
                subspace = state.get('subspace')
                state = QuditPureState.from_json(state)
            else:
                state = QubitState.from_json(state)
        setting = meta.get('setting')
        if setting is not None:
            setting = PreparationSetting(**setting)
        return cls(pixels, config, state=state, setting=setting,
                   seed=meta.get('seed'), subspace=subspace,
                   index=meta.get('index', 0))

    def __repr__(self):
        return 'Interferogram(shape=%s, state=%r)' % (self.pixels.shape,
                                                      self.state)


def prepare_qubit(setting):
    ''' Polarization state produced by HWP(alpha), then QWP(beta) if
    present, acting on vertical polarization. '''
    jones = operator2('hwp', setting.alpha)
    if setting.qwp_present:
        jones = operator2('qwp', setting.beta) @ jones
    psi = jones.entries @ VERTICAL
    return QubitState.from_state_vector(psi)


def intensity_curve(state, phase):
    """
    Detector intensity for a (possibly mixed) qubit as a function of the
    phase between the arms; the maximum sits at phase = phi.

    Args:
        state (QubitState): Incident state.
        phase (float, ndarray): Phase-shifter setting(s), radians.
    """
    theta, phi, mu = state
    return (3 + np.cos(theta) + 2 * mu * np.sin(theta)
            * np.cos(np.asarray(phase) - phi)) / 8


def qudit_intensity_curve(state, k, phase):
    ''' Intensity of the interferometer acting on subspace {k, k+1}. '''
    m = subspace_moments(state, k)
    return (m.norm_sq + m.m_pi + 2 * abs(m.m_sigma)
            * np.cos(np.angle(m.m_sigma) - np.asarray(phase))) / 4


Observables = namedtuple('Observables',
                         ['phase_shift', 'visibility', 'avg_intensity'])


def theory_observables(state):
    ''' Noiseless (phase shift, visibility, average intensity) of a qubit. '''
    theta, phi, mu = state
    avg = (3 + np.cos(theta)) / 8
    return Observables(phi, 2 * mu * np.sin(theta) / (3 + np.cos(theta)), avg)


def qudit_theory_observables(state, k):
    m = subspace_moments(state, k)
    level = m.norm_sq + m.m_pi
    vis = 2 * abs(m.m_sigma) / level if level > 0 else 0.0
    return Observables(float(np.angle(m.m_sigma)), vis, level / 4)


def _observables(state, subspace=None):
    if isinstance(state, tuple) and len(state) == 2 and \
       isinstance(state[0], QuditPureState):
        state, subspace = state
    if isinstance(state, QuditPureState):
        if subspace is None:
            raise ValueError("A qudit interferogram needs a subspace index.")
        return state, subspace, qudit_theory_observables(state, subspace)
    return state, None, theory_observables(state)


def synthesize(state, cfg, seed=None, index=0, setting=None, subspace=None):
    """
    Draws one interferogram.

    The mean of column x is
    B_f + A_f exp(-c_f (x - m_f)^2) (1 + V cos(k_f x + Phi)) with A_f
    proportional to the average intensity (A_f = peak_counts at
    Ibar = 1/2), then Poisson counts and Gaussian read noise.

    Args:
        state (QubitState, QuditPureState, tuple): A qubit, a qudit (with
            `subspace`), or a (QuditPureState, k) pair.
        cfg (InterferometerConfig): Acquisition settings.
        seed (int): Overrides cfg.rng_seed.
        index (int): Image index; each index gets an independent stream.
        setting (PreparationSetting): Recorded in the metadata.
        subspace (int): Qudit subspace k.

    Returns:
        An Interferogram.
    """
    cfg.validate()
    state, subspace, obs = _observables(state, subspace)
    seed = cfg.rng_seed if seed is None else int(seed)
    x = np.arange(cfg.image_width, dtype=float)
    amplitude = cfg.peak_counts * obs.avg_intensity / IBAR_MAX
    visibility = obs.visibility * (1 - cfg.bs_imbalance)
    fringe = np.cos(cfg.fringe_wavenumber * x + obs.phase_shift
                    + cfg.phase_offset)
    row = cfg.background + amplitude * cfg.envelope() * (1 + visibility *
                                                         fringe)
    mean = np.tile(row, (cfg.n_slices, 1))
    rng = np.random.default_rng([seed, index])
    if cfg.shot_noise:
        pixels = rng.poisson(mean).astype(float)
    else:
        pixels = mean
    if cfg.read_noise_sigma > 0:
        pixels = np.clip(pixels + rng.normal(0, cfg.read_noise_sigma,
                                             pixels.shape), 0, None)
    return Interferogram(pixels, cfg, state=state, setting=setting,
                         seed=seed, subspace=subspace, index=index)


def synthesize_series(state, cfg, seed=None, setting=None, subspace=None):
    ''' The cfg.n_images acquisitions of one state. '''
    return [synthesize(state, cfg, seed=seed, index=i, setting=setting,
                       subspace=subspace) for i in range(cfg.n_images)]


def hwp_sweep(alphas, cfg, seed=None):
    """
    The calibration run: one image per HWP angle with the QWP removed.

    Args:
        alphas (sequence): HWP angles, radians.
        cfg (InterferometerConfig): Acquisition settings.
        seed (int): Overrides cfg.rng_seed.

    Returns:
        A list of Interferograms, one per angle.
    """
    images = []
    for i, alpha in enumerate(alphas):
        setting = PreparationSetting(alpha, 0.0, qwp_present=False)
        images.append(synthesize(prepare_qubit(setting), cfg, seed=seed,
                                 index=10000 + i, setting=setting))
    return images
