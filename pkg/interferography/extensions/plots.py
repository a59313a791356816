"""
SVG figures of sweep results: the three observables against the HWP angle
with theory curves, and the two fidelity maps over the waveplate grid.
"""
import logging
import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ['plot_observables', 'plot_fidelity_maps']

logger = logging.getLogger(__name__)

PANELS = [('phase_shift', 'phase_std', 'theory_phase_shift',
           'Phase shift (rad)'),
          ('avg_intensity', 'avg_intensity_std', 'theory_avg_intensity',
           'Avg. intensity'),
          ('visibility', 'visibility_std', 'theory_visibility',
           'Visibility')]


def _save(fig, path):
    if os.path.dirname(path) and not os.path.exists(os.path.dirname(path)):
        os.makedirs(os.path.dirname(path))
    # a fixed date and hash salt keep the SVG byte-identical between runs
    plt.rcParams['svg.hashsalt'] = 'interferography'
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.debug("Wrote %s", path)
    return path


def _curve(axes, group, label, color=None):
    group = group.sort_values('alpha_deg')
    for ax, (col, err, theory, ylabel) in zip(axes, PANELS):
        line, = ax.plot(group['alpha_deg'], group[theory], '-', lw=1,
                        color=color)
        ax.errorbar(group['alpha_deg'], group[col], yerr=group[err],
                    fmt='o', ms=3, color=line.get_color(), label=label)
        ax.set_xlabel(u'α (deg)')
        ax.set_ylabel(ylabel)


def plot_observables(table, path):
    """
    One panel per observable against the HWP angle alpha, one curve per
    QWP angle beta plus the HWP-only reference in black: fitted points
    with error bars over the noiseless theory.

    Args:
        table (DataFrame): Sweep table with alpha/beta in degrees, the qwp
            column, the measured observables, their errors and theory
            columns.
        path (str): Output SVG path.
    """
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for beta, group in table[table['qwp']].groupby('beta_deg', sort=True):
        _curve(axes, group, u'β=%g°' % beta)
    reference = table[~table['qwp']]
    if len(reference):
        _curve(axes, reference, 'no QWP', color='black')
    axes[-1].legend(fontsize='small', loc='best')
    fig.tight_layout()
    return _save(fig, path)


def plot_fidelity_maps(table, path):
    ''' Pure-assumed and density-matrix fidelity over the (alpha, beta)
    grid, side by side. '''
    table = table[table['qwp']]
    alphas = np.sort(table['alpha_deg'].unique())
    betas = np.sort(table['beta_deg'].unique())
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, col, title in zip(axes, ['fidelity_pure', 'fidelity_mixed'],
                              ['Pure state assumed', 'Density matrix']):
        grid = table.pivot_table(index='alpha_deg', columns='beta_deg',
                                 values=col).reindex(index=alphas,
                                                     columns=betas)
        mesh = ax.imshow(grid.to_numpy(), origin='lower', aspect='auto',
                         vmin=min(0.9, np.nanmin(grid.to_numpy())), vmax=1,
                         extent=[betas[0], betas[-1], alphas[0], alphas[-1]])
        ax.set_title(title)
        ax.set_xlabel(u'β (deg)')
        ax.set_ylabel(u'α (deg)')
        fig.colorbar(mesh, ax=ax, label='Fidelity')
    fig.tight_layout()
    return _save(fig, path)
