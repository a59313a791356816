"""
Per-slice fitting of the Gaussian-weighted cosine fringe model and
aggregation of the slice fits into (phase shift, visibility, average
intensity).
"""
import json
import logging
import warnings
from collections import namedtuple

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from interferography import circstats
from interferography.exceptions import (FringeFitError, ConvergenceError,
                                        SingularJacobianError,
                                        AggregationError)
from interferography.utils import wrap_phase, listify


__all__ = ['FringeParams', 'SliceFit', 'FringeEstimate', 'Calibration',
           'fringe_model', 'fringe_jacobian', 'initial_guess',
           'initial_guesses', 'fit_slice', 'fit_slices', 'fit_image',
           'slice_table', 'aggregate', 'estimate', 'calibrate_norm',
           'calibrate_phase', 'calibrate']

logger = logging.getLogger(__name__)

PARAM_NAMES = ('B_f', 'A_f', 'c_f', 'm_f', 'v_f', 'k_f', 'phi_f')
VIS_CAP = 1.05
MIN_SLICE_LENGTH = 16
MIN_PERIOD = 4.0
# Below this |v_f| the fringe phase carries no information.
VIS_ZERO = 1e-6
# A slice whose phase standard error exceeds this is phase-indeterminate.
PHASE_STD_MAX = 1.0
LOW_VISIBILITY = 0.02
SINGULAR_RCOND = 1e-10
N_STARTS = 3
# Spectral peaks scored by the linear fit before the starts are picked.
N_CANDIDATES = 8
# Residual variance, in units of the expected shot-plus-read noise
# variance, above which a converged fit is a spurious minimum.
MAX_EXCESS = 10.0
# A start whose fit reaches this is accepted without trying the others.
GOOD_EXCESS = 2.0


class FringeParams(namedtuple('FringeParams', PARAM_NAMES)):
    ''' The seven parameters of
    B_f + A_f exp(-c_f (x - m_f)^2) (1 + v_f cos(k_f x + phi_f)). '''
    __slots__ = ()

    def as_array(self):
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, x):
        ''' Canonical form: v_f >= 0 (a negative contrast is the same fringe
        shifted by pi) and phi_f wrapped to (-pi, pi]. '''
        b, a, c, m, v, k, phi = [float(p) for p in x]
        if v < 0:
            v, phi = -v, phi + np.pi
        return cls(b, a, c, m, v, k, wrap_phase(phi))


SliceFit = namedtuple('SliceFit', ['params', 'covariance', 'residual_norm',
                                   'mean_intensity', 'flags'])


def fringe_model(x, params):
    b, a, c, m, v, k, phi = params
    return b + a * np.exp(-c * (x - m) ** 2) * (1 + v * np.cos(k * x + phi))


def fringe_jacobian(x, params):
    ''' Columns are d(model)/d(parameter) in PARAM_NAMES order. '''
    b, a, c, m, v, k, phi = params
    env = np.exp(-c * (x - m) ** 2)
    cos, sin = np.cos(k * x + phi), np.sin(k * x + phi)
    carrier = 1 + v * cos
    return np.column_stack([
        np.ones_like(x),
        env * carrier,
        -a * (x - m) ** 2 * env * carrier,
        2 * a * c * (x - m) * env * carrier,
        a * env * cos,
        -a * env * v * x * sin,
        -a * env * v * sin,
    ])


def _refine_peak(mag, i):
    # parabolic interpolation of the log-magnitude around bin i
    if i <= 0 or i >= len(mag) - 1:
        return float(i)
    l, c, r = np.log(mag[i - 1:i + 2] + 1e-300)
    denom = l - 2 * c + r
    if denom >= 0:
        return float(i)
    return i + 0.5 * (l - r) / denom


def _envelope_guess(y, x):
    # Gaussian moments of the slice above a low quantile, then a fit of the
    # fringe-free model B_f + A_f exp(-c_f (x - m_f)^2) from there.
    background = float(np.quantile(y, 0.02))
    weight = np.clip(y - background, 0, None)
    total = weight.sum()
    if total <= 0:
        raise FringeFitError("Degenerate slice: no signal above background.")
    center = float(np.sum(x * weight) / total)
    var = float(np.sum((x - center) ** 2 * weight) / total)
    start = np.array([background, float(weight.max()),
                      1.0 / (2 * max(var, 1.0)), center])
    flat = np.zeros(3)
    res = least_squares(
        lambda p: fringe_model(x, np.r_[p, flat]) - y, start,
        jac=lambda p: fringe_jacobian(x, np.r_[p, flat])[:, :4],
        bounds=([-np.inf, 0, 1e-12, -np.inf], np.inf), method='trf',
        x_scale='jac', max_nfev=50)
    b, a, c, m = res.x if res.status > 0 else start
    env = np.exp(-c * (x - m) ** 2)
    return float(b), float(a), float(c), float(m), env


def _spectral_peaks(mag, lo, hi):
    ''' Indices of the local maxima of mag[lo:hi + 1], strongest first; the
    band edges count as maxima when the spectrum falls away from them. '''
    band = mag[lo:hi + 1]
    left = np.r_[-np.inf, band[:-1]]
    right = np.r_[band[1:], -np.inf]
    peaks = np.flatnonzero((band >= left) & (band >= right)) + lo
    return peaks[np.argsort(-mag[peaks], kind='stable')]


def initial_guesses(slice_, min_period=MIN_PERIOD, n_starts=N_STARTS):
    """
    Ranked starting points for the fringe fit of one slice.

    The envelope (B_f, A_f, m_f, c_f) comes from a fringe-free Gaussian fit
    started at the moments of the slice above a low quantile. Candidate wavenumbers are the strongest
    peaks of the zero-padded spectrum of the envelope-weighted residual
    y - B_f - envelope, so the envelope's own low-frequency content does
    not mask a faint fringe. Each candidate is scored by the linear
    least-squares fit of B_f, A_f and the two fringe quadratures at that
    wavenumber, which also yields v_f and phi_f.

    Args:
        slice_ (array-like): One row of intensities, at least 16 pixels.
        min_period (float): Shortest fringe period searched, in pixels.
        n_starts (int): Number of starting points returned.

    Returns:
        A list of FringeParams, best linear fit first.
    """
    y = np.asarray(slice_, dtype=float)
    n = len(y)
    if n < MIN_SLICE_LENGTH:
        raise FringeFitError("A slice needs at least %d pixels, got %d." %
                             (MIN_SLICE_LENGTH, n))
    if not np.all(np.isfinite(y)) or np.ptp(y) <= 1e-12 * max(np.abs(y).max(),
                                                              1.0):
        raise FringeFitError("Degenerate slice: all values are equal.")
    x = np.arange(n, dtype=float)
    b, a, c, center, env = _envelope_guess(y, x)

    pad = 8 * n
    mag = np.abs(np.fft.rfft((y - b - a * env) * env, n=pad))
    k_grid = 2 * np.pi * np.arange(len(mag)) / pad
    lo = int(np.searchsorted(k_grid, 2 * np.pi * 3 / n))
    hi = int(np.searchsorted(k_grid, min(np.pi, 1.1 * 2 * np.pi / min_period),
                             side='right')) - 1

    scored = []
    for i in _spectral_peaks(mag, lo, hi)[:max(N_CANDIDATES, n_starts)]:
        k = 2 * np.pi * _refine_peak(mag, i) / pad
        design = np.column_stack([np.ones_like(x), env, env * np.cos(k * x),
                                  env * np.sin(k * x)])
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        cost = float(np.sum((design @ coef - y) ** 2))
        background, amplitude, p, q = coef
        if amplitude <= 0:
            background, amplitude = b, a
        vis = float(np.clip(np.hypot(p, q) / amplitude, 0.05, 1.0))
        phi = wrap_phase(np.arctan2(-q, p))
        scored.append((cost, FringeParams(float(background), float(amplitude),
                                          c, center, vis, k, phi)))
    if not scored:
        raise FringeFitError("No fringe wavenumber in the searched band.")
    scored.sort(key=lambda item: item[0])
    return [params for _, params in scored[:n_starts]]


def initial_guess(slice_, min_period=MIN_PERIOD):
    ''' The best-ranked starting point of initial_guesses(). '''
    return initial_guesses(slice_, min_period, n_starts=1)[0]


def _covariance(jac, s2, names):
    # Column-normalized pseudo-inverse; a vanishing singular value means a
    # parameter (combination) the data cannot determine.
    scale = np.linalg.norm(jac, axis=0)
    dead = np.flatnonzero(scale == 0)
    if dead.size:
        raise SingularJacobianError(
            "Fit is insensitive to parameter '%s'." % names[dead[0]],
            parameter=names[dead[0]])
    _, sv, vt = np.linalg.svd(jac / scale, full_matrices=False)
    if sv[-1] < SINGULAR_RCOND * sv[0]:
        worst = names[int(np.argmax(np.abs(vt[-1])))]
        raise SingularJacobianError(
            "Singular Jacobian; parameter '%s' is not identifiable." % worst,
            parameter=worst)
    inv = (vt.T / sv ** 2) @ vt
    return s2 * inv / np.outer(scale, scale)


def _noise_variance(model, read_noise):
    # Poisson variance of the fitted counts, read noise and quantization.
    return float(np.maximum(model, 0).mean() + read_noise ** 2 + 1.0)


def _least_squares(x, y, start, ftol, xtol, max_nfev):
    x0 = np.asarray(start, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise FringeFitError("Initial guess must be finite.")
    # k_f below one period per slice would mimic the envelope
    lower = np.array([-np.inf, 0, 1e-12, -np.inf, -VIS_CAP,
                      2 * np.pi / len(y), -np.inf])
    upper = np.array([np.inf, np.inf, np.inf, np.inf, VIS_CAP, np.pi, np.inf])
    span = upper - lower
    x0 = np.clip(x0, lower + 1e-9 * np.minimum(span, 1.0),
                 upper - 1e-9 * np.minimum(span, 1.0))

    res = least_squares(lambda p: fringe_model(x, p) - y, x0,
                        jac=lambda p: fringe_jacobian(x, p),
                        bounds=(lower, upper), method='trf', x_scale='jac',
                        ftol=ftol, xtol=xtol, gtol=1e-10, max_nfev=max_nfev)
    params = FringeParams.from_array(res.x)
    residual_norm = float(np.linalg.norm(fringe_model(x, params) - y))
    exact = residual_norm <= 1e-9 * np.linalg.norm(y)
    if res.status <= 0 and not exact:
        raise ConvergenceError("Fringe fit did not converge in %d "
                               "evaluations (%s)." % (max_nfev, res.message),
                               last_iterate=params)
    return params, residual_norm


def fit_slice(slice_, guess=None, ftol=1e-10, xtol=1e-10, max_nfev=200,
              read_noise=0.0, max_excess=MAX_EXCESS, n_starts=N_STARTS):
    """
    Damped least-squares fit of the fringe model to one slice.

    Without a guess the fit is started from each of initial_guesses() in
    turn and the lowest-cost result is kept; the first start whose residual
    variance is within GOOD_EXCESS of the noise floor ends the search.

    Args:
        slice_ (array-like): One row of intensities, in detector counts.
        guess (FringeParams): Single starting point; initial_guesses() if
            None.
        ftol (float): Relative cost-change tolerance.
        xtol (float): Relative parameter-step tolerance.
        max_nfev (int): Maximum number of model evaluations per start.
        read_noise (float): Detector read-noise sigma in counts, added to
            the Poisson variance of the noise floor.
        max_excess (float): Largest accepted ratio of residual variance to
            the noise floor; None disables the check (for data not in
            counts).
        n_starts (int): Number of starting points tried without a guess.

    Returns:
        A SliceFit with the canonical parameters, their 7x7 covariance
        (residual-variance scaled; inf on the rows of unidentifiable
        phase parameters), the residual norm, the background-free
        phase-averaged intensity, and flags.

    Raises:
        ConvergenceError: no start converged (carries the last iterate), or
            the best fit leaves a residual far above the noise floor.
        SingularJacobianError: a parameter other than the fringe phase is
            not identifiable (carries its name).
    """
    y = np.asarray(slice_, dtype=float)
    x = np.arange(len(y), dtype=float)
    dof = max(len(y) - len(PARAM_NAMES), 1)
    starts = [guess] if guess is not None else \
        initial_guesses(y, n_starts=n_starts)

    best, failure = None, None
    for start in starts:
        try:
            params, residual_norm = _least_squares(x, y, start, ftol, xtol,
                                                   max_nfev)
        except ConvergenceError as e:
            failure = failure or e
            continue
        excess = residual_norm ** 2 / dof / \
            _noise_variance(fringe_model(x, params), read_noise)
        if best is None or residual_norm < best[1]:
            best = (params, residual_norm, excess)
        if excess <= GOOD_EXCESS:
            break
    if best is None:
        raise failure
    params, residual_norm, excess = best
    if max_excess is not None and excess > max_excess:
        raise ConvergenceError("Fringe fit settled at a spurious minimum: "
                               "residual variance is %.3g times the noise "
                               "floor." % excess, last_iterate=params)

    flags = set()
    s2 = residual_norm ** 2 / dof
    jac = fringe_jacobian(x, params)
    cov = np.full((7, 7), np.inf)
    keep = list(range(7))
    if params.v_f < VIS_ZERO:
        flags.add('phase-indeterminate')
        keep = [0, 1, 2, 3, 4]
    sub = _covariance(jac[:, keep], s2, [PARAM_NAMES[i] for i in keep])
    cov[np.ix_(keep, keep)] = sub
    if len(keep) == 7 and np.sqrt(sub[6, 6]) > PHASE_STD_MAX:
        flags.add('phase-indeterminate')

    env = np.exp(-params.c_f * (x - params.m_f) ** 2)
    mean_intensity = float(params.A_f * env.mean())
    return SliceFit(params, cov, residual_norm, mean_intensity,
                    frozenset(flags))


def fit_slices(images, **fit_kwargs):
    """
    Fits every slice (row) of one or more images.

    Args:
        images (Interferogram, ndarray, list): Images or pixel arrays.
        fit_kwargs: Passed to fit_slice(). An image carrying its
            config supplies the read noise unless read_noise is given.

    Returns:
        A list with one SliceFit per slice, None where the fit failed.
    """
    fits = []
    for image in listify(images):
        pixels = getattr(image, 'pixels', image)
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        kwargs = dict(fit_kwargs)
        config = getattr(image, 'config', None)
        if config is not None:
            kwargs.setdefault('read_noise', config.read_noise_sigma)
        for row, y in enumerate(pixels):
            try:
                fits.append(fit_slice(y, **kwargs))
            except FringeFitError as e:
                logger.debug("Slice %d failed: %s", row, e)
                fits.append(None)
    return fits


def fit_image(image, **fit_kwargs):
    ''' Per-slice table of one interferogram (see slice_table()). '''
    return slice_table(fit_slices(image, **fit_kwargs))


def slice_table(fits):
    ''' One row per slice: the seven parameters, their standard errors, the
    residual norm and the background-free mean intensity. '''
    rows = []
    for i, fit in enumerate(fits):
        row = {'slice': i, 'status': 'failed' if fit is None else 'ok'}
        if fit is not None:
            errs = np.sqrt(np.diag(fit.covariance))
            for name, value, err in zip(PARAM_NAMES, fit.params, errs):
                row[name] = value
                row[name + '_err'] = err
            row['residual_norm'] = fit.residual_norm
            row['mean_intensity'] = fit.mean_intensity
            row['flags'] = ';'.join(sorted(fit.flags))
        rows.append(row)
    columns = ['slice', 'status'] + \
        [c for n in PARAM_NAMES for c in (n, n + '_err')] + \
        ['residual_norm', 'mean_intensity', 'flags']
    return pd.DataFrame.from_records(rows, columns=columns)


class FringeEstimate(namedtuple('FringeEstimate', [
        'phase_shift', 'phase_std', 'visibility', 'visibility_std',
        'avg_intensity', 'avg_intensity_std', 'n_slices_used', 'flags',
        'phase_spread'])):
    ''' The three interferogram observables with the standard errors of
    their slice means. phase_spread is the circular standard deviation
    sqrt(-2 ln R) of the slice phases themselves. '''
    __slots__ = ()

    def __new__(cls, phase_shift, phase_std, visibility, visibility_std,
                avg_intensity, avg_intensity_std, n_slices_used=1,
                flags=(), phase_spread=0.0):
        return super(FringeEstimate, cls).__new__(
            cls, wrap_phase(phase_shift), float(phase_std),
            float(visibility), float(visibility_std), float(avg_intensity),
            float(avg_intensity_std), int(n_slices_used),
            tuple(sorted(set(flags))), float(phase_spread))

    def to_json(self):
        data = dict(self._asdict())
        data['flags'] = list(self.flags)
        return data

    @classmethod
    def from_json(cls, data):
        try:
            return cls(**data)
        except TypeError as e:
            raise AggregationError("Malformed fringe estimate: %s" % e)


class Calibration(namedtuple('Calibration', ['norm_reference',
                                             'phase_reference'])):
    ''' Intensity norm and phase zero obtained from the HWP-only run. '''
    __slots__ = ()

    def to_json(self):
        return dict(self._asdict())

    @classmethod
    def ideal(cls, cfg):
        ''' The references a noiseless HWP-only run under `cfg` yields. '''
        return cls(float(cfg.peak_counts * cfg.envelope().mean()),
                   wrap_phase(cfg.phase_offset))

    @classmethod
    def load(cls, source):
        """
        Args:
            source (str, float, dict): A calibration JSON file, a dict, or a
                bare norm reference (phase reference 0).
        """
        if isinstance(source, (int, float)):
            return cls(float(source), 0.0)
        if isinstance(source, str):
            try:
                return cls(float(source), 0.0)
            except ValueError:
                with open(source, 'r') as fobj:
                    source = json.load(fobj)
        return cls(float(source['norm_reference']),
                   float(source.get('phase_reference', 0.0)))


def aggregate(per_slice, norm_reference=None, phase_reference=0.0,
              min_success_fraction=0.5):
    """
    Reduces slice fits to a FringeEstimate.

    Args:
        per_slice (list): SliceFit per slice; None marks a failed slice.
        norm_reference (float): Background-free mean intensity of the
            brightest HWP-only state. That state maps to Ibar = 1/2. If
            None, Ibar is reported in raw counts and flagged 'unnormalized'.
        phase_reference (float): Phase of the HWP-only run, subtracted
            from the circular-mean phase.
        min_success_fraction (float): Minimum share of slices that must
            have been fitted.

    Returns:
        A FringeEstimate.
    """
    fits = [f for f in per_slice if f is not None]
    if not fits:
        raise AggregationError("All %d slice fits failed." % len(per_slice))
    if norm_reference is not None and not norm_reference > 0:
        raise AggregationError("norm_reference must be positive, got %r." %
                               norm_reference)
    flags = set()
    if len(fits) < len(per_slice):
        flags.add('fit-failures')
        if len(fits) < min_success_fraction * len(per_slice):
            raise AggregationError("Only %d of %d slice fits succeeded." %
                                   (len(fits), len(per_slice)))

    phased = [f for f in fits if 'phase-indeterminate' not in f.flags]
    if 2 * len(phased) < len(fits):
        flags.add('phase-indeterminate')
    if phased:
        phases = np.array([f.params.phi_f for f in phased])
        phase = circstats.mean(phases) - phase_reference
        spread = circstats.std(phases)
        if len(phased) > 1:
            phase_std = spread / np.sqrt(len(phased) - 1)
        else:
            phase_std = float(np.sqrt(phased[0].covariance[6, 6]))
    else:
        phase, phase_std, spread = 0.0, np.pi, np.pi
    phase_std, spread = min(phase_std, np.pi), min(spread, np.pi)

    vis = np.array([f.params.v_f for f in fits])
    n = len(fits)
    visibility = float(np.clip(vis.mean(), 0.0, 1.0))
    visibility_std = float(vis.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if visibility < LOW_VISIBILITY:
        flags.add('low-visibility')

    level = np.array([f.mean_intensity for f in fits])
    level_se = float(level.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if norm_reference is None:
        logger.warning("No norm reference given; average intensity is "
                       "reported in raw counts.")
        flags.add('unnormalized')
        avg, avg_std = float(level.mean()), level_se
    else:
        avg = float(np.clip(0.5 * level.mean() / norm_reference, 0.0, 1.0))
        avg_std = 0.5 * level_se / norm_reference
    return FringeEstimate(phase, phase_std, visibility, visibility_std, avg,
                          avg_std, n, flags, spread)


def estimate(images, calibration=None, min_success_fraction=0.5,
             **fit_kwargs):
    """
    Fits all slices of all images of one acquisition and aggregates them.

    Args:
        images (Interferogram, list): The acquisition.
        calibration (Calibration): Norm and phase references; None leaves
            the intensity unnormalized and the phase unreferenced.
        min_success_fraction (float): See aggregate().
        fit_kwargs: Passed to fit_slice().

    Returns:
        A FringeEstimate.
    """
    if isinstance(calibration, (int, float)):
        warnings.warn("estimate() expects a Calibration; using %r as the "
                      "norm reference with a zero phase reference." %
                      calibration)
        calibration = Calibration(float(calibration), 0.0)
    fits = fit_slices(images, **fit_kwargs)
    norm, ref = (None, 0.0) if calibration is None else calibration
    est = aggregate(fits, norm, ref, min_success_fraction)
    logger.info("Fitted %d/%d slices: phase=%.4f visibility=%.4f "
                "avg_intensity=%.4g", est.n_slices_used, len(fits),
                est.phase_shift, est.visibility, est.avg_intensity)
    return est


def _sweep_fits(hwp_sweep, **fit_kwargs):
    hwp_sweep = listify(hwp_sweep)
    if not hwp_sweep:
        raise AggregationError("The HWP calibration sweep is empty.")
    per_image = []
    for image in hwp_sweep:
        fits = [f for f in fit_slices(image, **fit_kwargs) if f is not None]
        if fits:
            per_image.append(fits)
    if not per_image:
        raise AggregationError("No slice of the calibration sweep could be "
                               "fitted.")
    return per_image


def calibrate_norm(hwp_sweep, **fit_kwargs):
    ''' Largest background-free mean intensity across an HWP-only sweep;
    the state reaching it is assigned Ibar = 1/2 downstream. '''
    return float(max(np.mean([f.mean_intensity for f in fits])
                     for fits in _sweep_fits(hwp_sweep, **fit_kwargs)))


def calibrate_phase(hwp_sweep, **fit_kwargs):
    ''' Visibility-weighted circular-mean fringe phase of an HWP-only sweep:
    the zero of all reported phase shifts. '''
    fits = [f for image in _sweep_fits(hwp_sweep, **fit_kwargs)
            for f in image if 'phase-indeterminate' not in f.flags]
    if not fits:
        logger.warning("Calibration sweep has no determinate phase; using "
                       "a zero phase reference.")
        return 0.0
    return circstats.mean([f.params.phi_f for f in fits],
                          weights=[f.params.v_f for f in fits])


def calibrate(hwp_sweep, **fit_kwargs):
    ''' Both references from one HWP-only sweep. '''
    return Calibration(calibrate_norm(hwp_sweep, **fit_kwargs),
                       calibrate_phase(hwp_sweep, **fit_kwargs))
