import json
from glob import glob
from os.path import join, dirname, exists

import numpy as np
import pandas as pd
import pytest

from interferography.cli import main, build_parser, load_state
from interferography.core import QubitState, QuditPureState
from interferography.exceptions import StateError
from interferography.fringe import FringeEstimate


SPECS = join(dirname(__file__), 'specs')
QUICK = join(SPECS, 'quick.json')
NOISELESS = join(SPECS, 'noiseless.json')


def read_json(*parts):
    with open(join(*parts)) as fobj:
        return json.load(fobj)


@pytest.fixture(scope='module')
def calibrated(tmpdir_factory):
    ''' A noiseless calibration shared by the pipeline tests. '''
    out = str(tmpdir_factory.mktemp('calibration'))
    assert main(['calibrate', '--config', NOISELESS, '--out', out,
                 '--quiet']) == 0
    return join(out, 'calibration.json')


def simulate(out, *state_args, config=NOISELESS):
    assert main(['simulate', '--config', config, '--out', out, '--quiet'] +
                list(state_args)) == 0
    return sorted(glob(join(out, 'image_*.pgm')))


class TestParser:

    def test_common_options(self):
        args = build_parser().parse_args(['fit', 'a.pgm', 'b.pgm', '--seed',
                                          '3', '--peak-counts', '500'])
        assert args.images == ['a.pgm', 'b.pgm']
        assert args.seed == 3
        assert args.peak_counts == 500.0
        assert args.conflicts == 'overwrite'

    def test_angles(self):
        args = build_parser().parse_args(['simulate', '--alpha', '22.5deg',
                                          '--beta', '0.3'])
        assert args.alpha == pytest.approx(np.pi / 8)
        assert args.beta == 0.3

    def test_no_command(self):
        assert main([]) == 2

    def test_load_state(self):
        assert load_state(join(SPECS, 'equator.json')) == \
            QubitState(np.pi / 2)
        assert isinstance(load_state(join(SPECS, 'qutrit.json')),
                          QuditPureState)
        state = load_state({'re': [1, 0, 1], 'im': [0, 1, 0]})
        assert state.dim == 3
        with pytest.raises(StateError):
            load_state({'psi': [1, 0]})


class TestSimulate:

    def test_writes_images(self, tmpdir):
        out = str(tmpdir)
        paths = simulate(out, '--theta', '1.0', '--phi', '0.5',
                         '--n-images', '3')
        assert [p.rsplit('/', 1)[1] for p in paths] == \
            ['image_0.pgm', 'image_1.pgm', 'image_2.pgm']
        assert all(exists(p + '.json') for p in paths)
        manifest = read_json(out, 'manifest.json')
        assert manifest['command'] == 'simulate'
        assert manifest['config']['n_images'] == 3
        assert manifest['timestamp'].endswith('Z')

    def test_byte_identical_reruns(self, tmpdir):
        contents = []
        for name in ('a', 'b'):
            paths = simulate(str(tmpdir.mkdir(name)), '--theta', '1.0',
                             config=QUICK)
            blobs = []
            for path in paths:
                for p in (path, path + '.json'):
                    with open(p, 'rb') as fobj:
                        blobs.append(fobj.read())
            contents.append(blobs)
        assert contents[0] == contents[1]

    def test_waveplate_setting(self, tmpdir):
        paths = simulate(str(tmpdir), '--alpha', '22.5deg', '--no-qwp')
        meta = read_json(paths[0] + '.json')
        assert meta['setting']['qwp_present'] is False
        assert meta['state']['theta'] == pytest.approx(np.pi / 2)

    def test_qudit_subspace(self, tmpdir):
        out = str(tmpdir)
        assert main(['simulate', '--config', QUICK, '--out', out, '--quiet',
                     '--qudit-file', join(SPECS, 'qutrit.json'),
                     '--subspace', '2']) == 0
        assert exists(join(out, 'k2_image_0.pgm'))

    def test_conflicting_states(self, tmpdir):
        with pytest.raises(SystemExit) as e:
            main(['simulate', '--out', str(tmpdir), '--theta', '1.0',
                  '--alpha', '0.2'])
        assert e.value.code == 2
        with pytest.raises(SystemExit) as e:
            main(['simulate', '--out', str(tmpdir)])
        assert e.value.code == 2

    def test_conflict_fail(self, tmpdir):
        out = str(tmpdir)
        simulate(out, '--theta', '1.0')
        assert main(['simulate', '--config', NOISELESS, '--out', out,
                     '--quiet', '--theta', '1.0', '--conflicts',
                     'fail']) == 3


class TestPipeline:

    def test_fit_and_reconstruct(self, tmpdir, calibrated):
        truth = QubitState(1.2, 0.5, 0.8)
        sim = str(tmpdir.mkdir('sim'))
        paths = simulate(sim, '--theta', '1.2', '--phi', '0.5', '--mu', '0.8')
        fit = str(tmpdir.mkdir('fit'))
        assert main(['fit', '--out', fit, '--quiet', '--norm-ref',
                     calibrated] + paths) == 0
        table = pd.read_csv(join(fit, 'slices.csv'))
        assert len(table) == 4
        assert (table['status'] == 'ok').all()
        est = read_json(fit, 'estimate.json')
        assert 'unnormalized' not in est['flags']

        target = str(tmpdir.join('target.json'))
        with open(target, 'w') as fobj:
            json.dump(truth.to_json(), fobj)
        rec = str(tmpdir.mkdir('rec'))
        assert main(['reconstruct', '--out', rec, '--quiet', '--target',
                     target, join(fit, 'estimate.json')]) == 0
        result = read_json(rec, 'reconstruction.json')
        assert result['theta'] == pytest.approx(1.2, abs=1e-3)
        assert result['phi'] == pytest.approx(0.5, abs=1e-3)
        assert result['mu'] == pytest.approx(0.8, abs=1e-3)
        assert result['fidelity_vs_target'] > 0.9999
        assert 0 < result['entanglement_entropy'] < 1

        assert main(['reconstruct', '--out', rec, '--quiet', '--assume-pure',
                     join(fit, 'estimate.json')]) == 0
        result = read_json(rec, 'reconstruction.json')
        assert result['mu'] == 1.0
        assert 'entanglement_entropy' not in result

    def test_missing_norm_reference(self, tmpdir):
        paths = simulate(str(tmpdir.mkdir('sim')), '--theta', '1.0')
        fit = str(tmpdir.mkdir('fit'))
        assert main(['fit', '--out', fit, '--quiet'] + paths) == 0
        assert 'unnormalized' in read_json(fit, 'estimate.json')['flags']
        assert main(['reconstruct', '--out', fit, '--quiet',
                     join(fit, 'estimate.json')]) == 8

    def test_qudit_options_need_qudit(self, tmpdir):
        path = str(tmpdir.join('estimate.json'))
        with open(path, 'w') as fobj:
            json.dump(FringeEstimate(0.1, 0.01, 0.5, 0.01, 0.4, 0.001,
                                     10).to_json(), fobj)
        for extra in (['--scales', '2'], ['--dim', '2']):
            with pytest.raises(SystemExit) as e:
                main(['reconstruct', '--out', str(tmpdir), '--quiet', path] +
                     extra)
            assert e.value.code == 2

    def test_bad_images(self, tmpdir):
        corrupt = str(tmpdir.join('corrupt.pgm'))
        with open(corrupt, 'wb') as fobj:
            fobj.write(b'P2\n4 4\n255\n')
        assert main(['fit', '--out', str(tmpdir), '--quiet', corrupt]) == 9
        assert main(['fit', '--out', str(tmpdir), '--quiet',
                     str(tmpdir.join('missing.pgm'))]) == 10


class TestSweep:

    def test_noiseless_sweep_matches_theory(self, tmpdir):
        out = str(tmpdir)
        assert main(['sweep', '--config', NOISELESS, '--out', out, '--quiet',
                     '--alpha-step', '15deg', '--beta-step', '45deg',
                     '--no-plots']) == 0
        table = pd.read_csv(join(out, 'sweep.csv'))
        assert len(table) == 4 * 4 + 4
        assert (~table['qwp']).sum() == 4
        reference = table[~table['qwp']]
        assert reference['beta_deg'].isnull().all()
        fringed = reference[reference['theory_visibility'] > 0.05]
        assert len(fringed) == 2
        assert np.allclose(fringed['phase_shift'], 0, atol=1e-6)
        summary = read_json(out, 'summary.json')
        assert summary['cells'] == 16
        assert summary['reference_cells'] == 4
        assert exists(join(out, 'calibration.json'))
        assert not exists(join(out, 'observables.svg'))
        good = table[(np.sin(table['theta']) > 0.2) &
                     (table['theory_visibility'] > 0.05)]
        assert len(good) > 0
        for measured in ('phase_shift', 'visibility', 'avg_intensity'):
            assert np.allclose(good[measured], good['theory_' + measured],
                               atol=1e-6)
        assert (good['fidelity_mixed'] > 1 - 1e-6).all()
        assert (good['fidelity_mixed_std'] >= 0).all()
        assert (good['fidelity_pure_std'] >= 0).all()

    def test_noisy_sweep_fidelity(self, tmpdir):
        out = str(tmpdir)
        assert main(['sweep', '--config', QUICK, '--out', out, '--quiet',
                     '--beta-step', '30deg', '--no-plots']) == 0
        summary = read_json(out, 'summary.json')
        assert summary['cells'] == 5 * 6
        assert summary['failed'] == 0
        assert summary['mean_fidelity_pure'] > 0.98
        table = pd.read_csv(join(out, 'sweep.csv'))
        assert (table['fidelity_pure_std'] >= 0).all()
        assert table['fidelity_pure_std'].median() > 0

    def test_plots(self, tmpdir):
        out = str(tmpdir)
        assert main(['sweep', '--config', NOISELESS, '--out', out, '--quiet',
                     '--alpha-step', '45deg', '--beta-step', '90deg']) == 0
        for name in ('observables.svg', 'fidelity.svg'):
            with open(join(out, name)) as fobj:
                assert '<svg' in fobj.read()
        with open(join(out, 'observables.svg')) as fobj:
            assert 'no QWP' in fobj.read()


class TestBench:

    def test_deterministic(self, tmpdir):
        outputs = []
        for name in ('a', 'b'):
            out = str(tmpdir.mkdir(name))
            assert main(['bench', '--config', QUICK, '--out', out, '--quiet',
                         '--shots', '100000', '--trials', '1',
                         '--dims', '2', '3']) == 0
            with open(join(out, 'bench.csv')) as fobj:
                outputs.append(fobj.read())
        assert outputs[0] == outputs[1]
        table = pd.read_csv(join(out, 'bench.csv'))
        assert set(table['method']) == {'qsi', 'qst'}
        summary = read_json(out, 'bench.json')
        assert summary['settings'][1] == {'d': 3, 'qsi': 2, 'qst': 8,
                                          'pure_qst': 8}
        assert set(summary['fidelity']) == {'qsi@100000', 'qst@100000'}


class TestQuditDemo:

    def test_qutrit(self, tmpdir):
        out = str(tmpdir)
        assert main(['qudit-demo', '--config', QUICK, '--out', out, '--quiet',
                     '--qudit-file', join(SPECS, 'qutrit.json')]) == 0
        result = read_json(out, 'qudit.json')
        assert result['kind'] == 'qudit'
        assert len(result['estimates']) == 2
        assert result['fidelity_vs_target'] > 0.95
