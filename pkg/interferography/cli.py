"""
Command-line entry point: simulate interferograms, fit them, reconstruct
states, and run the waveplate sweep, the tomography benchmark and the qudit
demonstration.
"""
import argparse
import json
import logging
import os
import sys
from collections import namedtuple
from contextlib import contextmanager
from datetime import datetime
from multiprocessing import Pool
from os.path import join, basename

import numpy as np
import pandas as pd

from interferography import bench, fringe, reconstruct
from interferography._version import __version__
from interferography.core import (QubitState, QuditPureState, fidelity,
                                  entanglement_entropy)
from interferography.exceptions import QSIError, StateError
from interferography.extensions.pgm import (save_interferogram,
                                            load_interferogram)
from interferography.extensions.writable import (build_path, write_json,
                                                 write_table, CONFLICT_MODES)
from interferography.optics import (InterferometerConfig, PreparationSetting,
                                    prepare_qubit, synthesize_series,
                                    hwp_sweep, theory_observables)
from interferography.utils import parse_angle, natural_sort, wrap_phase

__all__ = ['RunManifest', 'build_parser', 'main']

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_IO = 10
IMAGE_PATTERNS = ['[k{subspace}_]image_{index}.pgm']
CALIBRATION_FILE = 'calibration.json'
MANIFEST_FILE = 'manifest.json'

# (flag, config field, type)
CONFIG_OVERRIDES = [
    ('--peak-counts', 'peak_counts', float),
    ('--n-images', 'n_images', int),
    ('--n-slices', 'n_slices', int),
    ('--image-width', 'image_width', int),
    ('--background', 'background', float),
    ('--read-noise', 'read_noise_sigma', float),
    ('--bs-imbalance', 'bs_imbalance', float),
    ('--phase-offset', 'phase_offset', parse_angle),
    ('--fringe-wavenumber', 'fringe_wavenumber', float),
]


class RunManifest(namedtuple('RunManifest', [
        'command', 'inputs', 'output_dir', 'seed', 'config', 'version',
        'timestamp'])):
    ''' Everything needed to rerun a command; written next to its
    outputs. '''
    __slots__ = ()

    @classmethod
    def create(cls, args, inputs=(), config=None):
        seed = config.rng_seed if config else args.seed
        return cls(args.command, [str(p) for p in inputs], args.out, seed,
                   config.to_json() if config else None,
                   __version__, datetime.utcnow().isoformat() + 'Z')

    def write(self, conflicts='overwrite'):
        return write_json(join(self.output_dir, MANIFEST_FILE),
                          dict(self._asdict()), conflicts=conflicts)


# -- Helpers -----------------------------------------------------------------

def _load_config(args):
    overrides = {field: getattr(args, field, None)
                 for _, field, _ in CONFIG_OVERRIDES}
    if getattr(args, 'no_shot_noise', False):
        overrides['shot_noise'] = False
    if args.seed is not None:
        overrides['rng_seed'] = args.seed
    return InterferometerConfig.load(args.config, **overrides)


def load_state(source):
    """
    A state from a JSON file or dict: {"theta", "phi", "mu"} for a qubit,
    {"thetas", "phis"} for a qudit, or {"re": [...], "im": [...]} amplitudes.
    """
    if isinstance(source, str):
        with open(source, 'r') as fobj:
            source = json.load(fobj)
    if 'thetas' in source:
        return QuditPureState.from_json(source)
    if 'theta' in source:
        return QubitState.from_json(source)
    if 're' in source:
        psi = np.asarray(source['re'], dtype=float) + \
            1j * np.asarray(source.get('im', np.zeros(len(source['re']))))
        if len(psi) == 2:
            return QubitState.from_state_vector(psi)
        return QuditPureState.from_amplitudes(psi)
    raise StateError("Unrecognized state description: keys %s." %
                     sorted(source))


@contextmanager
def _mapper(workers):
    # Pool.map keeps task order, so results reduce identically
    if workers > 1:
        pool = Pool(workers)
        try:
            yield pool.map
        finally:
            pool.close()
            pool.join()
    else:
        yield lambda f, tasks: list(map(f, tasks))


def _degrees(start, stop, step, inclusive):
    n = int(np.floor((stop - start) / step + 1e-9))
    grid = start + step * np.arange(n + 1)
    if not inclusive:
        grid = grid[grid < stop - 1e-12]
    return grid


def _calibration(cfg, args):
    alphas = _degrees(0, np.pi / 4, parse_angle(args.calibration_step),
                      inclusive=True)
    cal = fringe.calibrate(hwp_sweep(alphas, cfg))
    logger.info("Calibration: norm_reference=%.6g phase_reference=%.6f",
                cal.norm_reference, cal.phase_reference)
    return cal


def _state_from_args(args, parser):
    given = [name for name, present in [
        ('--theta', args.theta is not None),
        ('--alpha', args.alpha is not None),
        ('--qudit-file', args.qudit_file is not None)] if present]
    if len(given) > 1:
        parser.error("Conflicting state options: %s." %
                     ', '.join(given))
    if args.qudit_file:
        state = load_state(args.qudit_file)
        if not isinstance(state, QuditPureState):
            parser.error("--qudit-file must describe a qudit.")
        if args.subspace is None:
            parser.error("--qudit-file needs --subspace.")
        return state, None
    if args.alpha is not None:
        setting = PreparationSetting(args.alpha, args.beta or 0.0,
                                     qwp_present=not args.no_qwp)
        return prepare_qubit(setting), setting
    if args.theta is None:
        parser.error("Give a state with --theta, --alpha or --qudit-file.")
    return QubitState(args.theta, args.phi or 0.0,
                      1.0 if args.mu is None else args.mu), None


# -- Commands ----------------------------------------------------------------

def cmd_simulate(args, parser):
    cfg = _load_config(args)
    state, setting = _state_from_args(args, parser)
    images = synthesize_series(state, cfg, setting=setting,
                               subspace=args.subspace)
    paths = []
    for image in images:
        path = build_path({'index': image.index, 'subspace': args.subspace},
                          IMAGE_PATTERNS)
        paths.append(save_interferogram(image, path, root=args.out,
                                        conflicts=args.conflicts))
    logger.info("Wrote %d images to %s", len(paths), args.out)
    RunManifest.create(args, config=cfg).write()
    return paths


def cmd_fit(args, parser):
    calibration = None
    if args.norm_ref is not None:
        calibration = fringe.Calibration.load(args.norm_ref)
    inputs = natural_sort(args.images)
    fits, tables = [], []
    for path in inputs:
        image = load_interferogram(path)
        image_fits = fringe.fit_slices(image, max_nfev=args.max_nfev)
        table = fringe.slice_table(image_fits)
        table.insert(0, 'image', basename(path))
        tables.append(table)
        fits.extend(image_fits)
    norm, ref = (None, 0.0) if calibration is None else calibration
    est = fringe.aggregate(fits, norm, ref, args.min_success)
    write_table(join(args.out, 'slices.csv'),
                pd.concat(tables, ignore_index=True))
    write_json(join(args.out, 'estimate.json'), est.to_json())
    logger.info("phase=%.4f visibility=%.4f avg_intensity=%.5g flags=%s",
                est.phase_shift, est.visibility, est.avg_intensity,
                list(est.flags))
    RunManifest.create(args, inputs).write()
    return est


def _load_estimate(path):
    with open(path, 'r') as fobj:
        return fringe.FringeEstimate.from_json(json.load(fobj))


def cmd_reconstruct(args, parser):
    ests = [_load_estimate(p) for p in args.estimates]
    if args.qudit or len(ests) > 1:
        if args.assume_pure:
            parser.error("--assume-pure applies to qubits only.")
        result = reconstruct.invert_qudit(ests, scales=args.scales,
                                          refine=args.refine, dim=args.dim)
    elif args.scales is not None or args.dim is not None:
        parser.error("--scales and --dim apply to qudit reconstructions "
                     "only; pass --qudit or several estimates.")
    elif args.assume_pure:
        result = reconstruct.reconstruct_pure_assumed(ests[0])
    else:
        result = reconstruct.invert_qubit(ests[0])
    if args.target:
        result = result.with_target(load_state(args.target))
    data = result.to_json()
    if result.kind == 'qubit' and not args.assume_pure:
        data['entanglement_entropy'] = \
            entanglement_entropy(result.state)
    write_json(join(args.out, 'reconstruction.json'), data)
    logger.info("Reconstructed %r", result)
    RunManifest.create(args, args.estimates).write()
    return result


def cmd_calibrate(args, parser):
    cfg = _load_config(args)
    cal = _calibration(cfg, args)
    write_json(join(args.out, CALIBRATION_FILE), cal.to_json())
    RunManifest.create(args, config=cfg).write()
    return cal


def _sweep_cell(task):
    alpha, beta, cfg, calibration, seed = task
    # beta None is the HWP-only reference curve
    setting = PreparationSetting(alpha, beta or 0.0,
                                 qwp_present=beta is not None)
    state = prepare_qubit(setting)
    theory = theory_observables(state)
    row = {'alpha_deg': np.rad2deg(alpha),
           'beta_deg': np.nan if beta is None else np.rad2deg(beta),
           'qwp': setting.qwp_present,
           'theta': state.theta, 'phi': state.phi,
           'theory_phase_shift': theory.phase_shift,
           'theory_visibility': theory.visibility * (1 - cfg.bs_imbalance),
           'theory_avg_intensity': theory.avg_intensity}
    try:
        est = fringe.estimate(synthesize_series(state, cfg, seed=seed,
                                                setting=setting),
                              calibration)
        fid = reconstruct.reconstruct_mixed_fidelity(est, state)
    except QSIError as e:
        logger.warning("Cell alpha=%.1f beta=%.1f failed: %s",
                       row['alpha_deg'], row['beta_deg'], e)
        row['flags'] = 'failed'
        return row
    # report the measured phase on the branch nearest the theory value
    phase = theory.phase_shift + wrap_phase(est.phase_shift -
                                            theory.phase_shift)
    row.update({'phase_shift': phase, 'phase_std': est.phase_std,
                'phase_spread': est.phase_spread,
                'visibility': est.visibility,
                'visibility_std': est.visibility_std,
                'avg_intensity': est.avg_intensity,
                'avg_intensity_std': est.avg_intensity_std,
                'fidelity_pure': fid.pure_assumed,
                'fidelity_mixed': fid.mixed,
                'fidelity_pure_std': fid.pure_assumed_std,
                'fidelity_mixed_std': fid.mixed_std,
                'flags': ';'.join(est.flags)})
    return row


SWEEP_COLUMNS = ['alpha_deg', 'beta_deg', 'qwp', 'theta', 'phi',
                 'phase_shift', 'phase_std', 'phase_spread', 'visibility',
                 'visibility_std', 'avg_intensity', 'avg_intensity_std',
                 'theory_phase_shift', 'theory_visibility',
                 'theory_avg_intensity', 'fidelity_pure',
                 'fidelity_pure_std', 'fidelity_mixed', 'fidelity_mixed_std',
                 'flags']


def cmd_sweep(args, parser):
    cfg = _load_config(args)
    calibration = _calibration(cfg, args)
    alphas = _degrees(0, parse_angle(args.alpha_max),
                      parse_angle(args.alpha_step), inclusive=True)
    betas = _degrees(0, parse_angle(args.beta_max),
                     parse_angle(args.beta_step), inclusive=False)
    cells = [(a, b) for a in alphas for b in betas] + \
        [(a, None) for a in alphas]
    tasks = [(a, b, cfg, calibration, cfg.rng_seed + 1 + i)
             for i, (a, b) in enumerate(cells)]
    logger.info("Sweeping %d x %d waveplate grid plus %d HWP-only cells",
                len(alphas), len(betas), len(alphas))
    with _mapper(args.workers) as mapper:
        rows = mapper(_sweep_cell, tasks)
    table = pd.DataFrame.from_records(rows, columns=SWEEP_COLUMNS)
    write_table(join(args.out, 'sweep.csv'), table)
    write_json(join(args.out, CALIBRATION_FILE), calibration.to_json())
    grid = table[table['qwp']]
    summary = {'cells': len(grid),
               'reference_cells': len(table) - len(grid),
               'failed': int(table['fidelity_pure'].isna().sum()),
               'mean_fidelity_pure': float(grid['fidelity_pure'].mean()),
               'mean_fidelity_mixed': float(grid['fidelity_mixed'].mean())}
    write_json(join(args.out, 'summary.json'), summary)
    if not args.no_plots:
        from interferography.extensions import plots
        plots.plot_observables(table, join(args.out, 'observables.svg'))
        plots.plot_fidelity_maps(table, join(args.out, 'fidelity.svg'))
    logger.info("Mean fidelity: %.4f (pure assumed), %.4f (mixed)",
                summary['mean_fidelity_pure'],
                summary['mean_fidelity_mixed'])
    RunManifest.create(args, config=cfg).write()
    return table


BENCH_STATES = [QubitState(0.0), QubitState(np.pi / 2),
                QubitState(np.pi / 2, np.pi / 2),
                QubitState(2 * np.arccos(np.sqrt(0.8)), 0.7, 0.6)]


def cmd_bench(args, parser):
    cfg = _load_config(args)
    states = BENCH_STATES if not args.states else \
        [load_state(p) for p in args.states]
    seed = cfg.rng_seed
    tables = []
    with _mapper(args.workers) as mapper:
        for shots in args.shots:
            tables.append(bench.compare(states, bench.ShotBudget(shots), cfg,
                                        n_trials=args.trials, seed=seed,
                                        mapper=mapper))
    table = pd.concat(tables, ignore_index=True)
    settings = bench.settings_table(args.dims)
    write_table(join(args.out, 'bench.csv'), table)
    write_table(join(args.out, 'settings.csv'), settings)
    summary = {
        'settings': settings.to_dict(orient='records'),
        'fidelity': {'%s@%d' % (m, s): float(g['fidelity_mean'].mean())
                     for (m, s), g in table.groupby(['method', 'shots'])}}
    write_json(join(args.out, 'bench.json'), summary)
    RunManifest.create(args, args.states or (), config=cfg).write()
    return table


def _random_qudit(dim, rng):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return QuditPureState.from_amplitudes(psi / np.linalg.norm(psi))


def cmd_qudit_demo(args, parser):
    cfg = _load_config(args)
    if args.qudit_file:
        state = load_state(args.qudit_file)
        if not isinstance(state, QuditPureState):
            parser.error("--qudit-file must describe a qudit.")
    else:
        state = _random_qudit(args.dim, np.random.default_rng(cfg.rng_seed))
    calibration = _calibration(cfg, args)
    ests = []
    for k in range(1, state.dim):
        images = synthesize_series(state, cfg, seed=cfg.rng_seed + k,
                                   subspace=k)
        ests.append(fringe.estimate(images, calibration))
    result = reconstruct.invert_qudit(ests, refine=args.refine)
    data = result.to_json()
    data['target'] = state.to_json()
    data['fidelity_vs_target'] = fidelity(result.rho, state)
    data['estimates'] = [e.to_json() for e in ests]
    write_json(join(args.out, 'qudit.json'), data)
    logger.info("Qudit d=%d reconstructed with fidelity %.5f", state.dim,
                data['fidelity_vs_target'])
    RunManifest.create(args, [args.qudit_file] if args.qudit_file else (),
                       config=cfg).write()
    return result


# -- Parser ------------------------------------------------------------------

def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None,
                        help='Seed for every random draw.')
    common.add_argument('--out', default='.',
                        help='Output directory.')
    common.add_argument('--config', default=None,
                        help='InterferometerConfig JSON file.')
    common.add_argument('--conflicts', default='overwrite',
                        choices=CONFLICT_MODES,
                        help='What to do with existing image files.')
    common.add_argument('--workers', type=int, default=1,
                        help='Worker processes for grid commands.')
    noise = common.add_mutually_exclusive_group()
    noise.add_argument('--quiet', action='store_true',
                       help='Only log warnings and errors.')
    noise.add_argument('-v', '--verbose', action='store_true',
                       help='Log debugging output.')
    for flag, field, kind in CONFIG_OVERRIDES:
        common.add_argument(flag, dest=field, type=kind, default=None)
    common.add_argument('--no-shot-noise', action='store_true')
    common.add_argument('--calibration-step', default='5deg',
                        help='HWP step of the calibration sweep.')
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog='interferography',
        description='Quantum state interferography: simulate, fit and '
                    'reconstruct.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('simulate', parents=[common],
                       help='Synthesize interferograms of one state.')
    p.add_argument('--theta', type=parse_angle)
    p.add_argument('--phi', type=parse_angle)
    p.add_argument('--mu', type=float)
    p.add_argument('--alpha', type=parse_angle,
                   help='HWP angle, e.g. 22.5deg.')
    p.add_argument('--beta', type=parse_angle, help='QWP angle.')
    p.add_argument('--no-qwp', action='store_true')
    p.add_argument('--qudit-file')
    p.add_argument('--subspace', type=int)

    p = sub.add_parser('fit', parents=[common],
                       help='Fit interferogram images.')
    p.add_argument('images', nargs='+')
    p.add_argument('--norm-ref', help='Calibration JSON or a number.')
    p.add_argument('--min-success', type=float, default=0.5)
    p.add_argument('--max-nfev', type=int, default=200)

    p = sub.add_parser('reconstruct', parents=[common],
                       help='Reconstruct a state from fringe estimates.')
    p.add_argument('estimates', nargs='+')
    p.add_argument('--assume-pure', action='store_true')
    p.add_argument('--qudit', action='store_true')
    p.add_argument('--dim', type=int)
    p.add_argument('--scales', type=float, nargs='+')
    p.add_argument('--refine', default='auto',
                   choices=reconstruct.REFINE_MODES)
    p.add_argument('--target', help='State JSON to compute fidelity to.')

    sub.add_parser('calibrate', parents=[common],
                   help='Run the HWP-only calibration sweep.')

    p = sub.add_parser('sweep', parents=[common],
                       help='Full pipeline over the waveplate grid.')
    p.add_argument('--alpha-step', default='10deg')
    p.add_argument('--alpha-max', default='45deg')
    p.add_argument('--beta-step', default='10deg')
    p.add_argument('--beta-max', default='180deg')
    p.add_argument('--no-plots', action='store_true')

    p = sub.add_parser('bench', parents=[common],
                       help='Compare with Pauli tomography.')
    p.add_argument('--shots', type=int, nargs='+',
                   default=[1000, 10000, 100000])
    p.add_argument('--trials', type=int, default=10)
    p.add_argument('--states', nargs='*')
    p.add_argument('--dims', type=int, nargs='+', default=[2, 3, 4, 5])

    p = sub.add_parser('qudit-demo', parents=[common],
                       help='Reconstruct a qudit from its subspaces.')
    p.add_argument('--dim', type=int, default=3)
    p.add_argument('--qudit-file')
    p.add_argument('--refine', default='auto',
                   choices=reconstruct.REFINE_MODES)
    return parser


COMMANDS = {
    'simulate': cmd_simulate,
    'fit': cmd_fit,
    'reconstruct': cmd_reconstruct,
    'calibrate': cmd_calibrate,
    'sweep': cmd_sweep,
    'bench': cmd_bench,
    'qudit-demo': cmd_qudit_demo,
}


def _configure_logging(args):
    level = logging.INFO
    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG
    root = logging.getLogger('interferography')
    root.handlers = []
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: '
                                           '%(message)s'))
    root.addHandler(handler)
    root.setLevel(level)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    _configure_logging(args)
    try:
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args, parser)
    except QSIError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except (IOError, OSError) as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    return 0


if __name__ == '__main__':
    sys.exit(main())
