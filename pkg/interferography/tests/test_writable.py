import json
import logging
from os.path import join, exists, dirname

import numpy as np
import pandas as pd
import pytest

from interferography.core import QubitState
from interferography.exceptions import ConfigError, ImageFormatError
from interferography.extensions.writable import (build_path,
                                                 write_contents_to_file,
                                                 write_json, write_table,
                                                 dumps_json)
from interferography.extensions.pgm import (encode_pgm, decode_pgm,
                                            read_image, save_interferogram,
                                            load_interferogram)
from interferography.optics import InterferometerConfig, synthesize


SPECS = join(dirname(__file__), 'specs')


@pytest.fixture
def image():
    cfg = InterferometerConfig.load(join(SPECS, 'noiseless.json'))
    return synthesize(QubitState(1.0, 0.5, 0.8), cfg)


class TestBuildPath:

    def test_patterns(self):
        entities = {'kind': 'qubit', 'index': 2, 'alpha': 10}

        # optional chunk dropped when its entity is missing
        pats = '[k{subspace}_]image_{index}.pgm'
        assert build_path(entities, pats) == 'image_2.pgm'
        assert build_path(dict(entities, subspace=1), pats) == \
            'k1_image_2.pgm'

        # first pattern that can be filled wins
        pats = ['{seed}/image_{index}.pgm', 'alpha-{alpha}/{index}.pgm']
        assert build_path(entities, pats) == 'alpha-10/2.pgm'

        # conditional values and defaults
        assert build_path(entities, '{kind<qudit>}/{index}.pgm') is None
        assert build_path(entities, '{kind<qubit|qudit>}/{index}.pgm') == \
            'qubit/2.pgm'
        assert build_path({'index': 3}, 'seed-{seed|0}/{index}.pgm') == \
            'seed-0/3.pgm'


class TestWriteContents:

    def test_conflicts(self, tmpdir, caplog):
        root = str(tmpdir)
        target = join(root, 'out', 'result.json')
        assert write_contents_to_file('out/result.json', 'a', root=root) == \
            target
        with pytest.raises(ConfigError):
            write_contents_to_file('out/result.json', 'b', root=root)
        with caplog.at_level(logging.WARNING):
            assert write_contents_to_file('out/result.json', 'b', root=root,
                                          conflicts='skip') is None
        assert 'already exists' in caplog.text
        assert write_contents_to_file('out/result.json', 'c', root=root,
                                      conflicts='append') == \
            join(root, 'out', 'result_1.json')
        write_contents_to_file('out/result.json', 'd', root=root,
                               conflicts='overwrite')
        with open(target) as fobj:
            assert fobj.read() == 'd'
        with pytest.raises(ConfigError):
            write_contents_to_file('x.json', 'e', root=root,
                                   conflicts='rename')

    def test_json_is_deterministic(self, tmpdir):
        data = {'b': np.float64(0.5), 'a': np.arange(3), 'c': {'z', 'y'}}
        text = dumps_json(data)
        assert text == dumps_json(dict(reversed(list(data.items()))))
        assert json.loads(text) == {'a': [0, 1, 2], 'b': 0.5,
                                    'c': ['y', 'z']}
        path = write_json('data.json', data, root=str(tmpdir))
        with open(path) as fobj:
            assert fobj.read() == text

    def test_table(self, tmpdir):
        table = pd.DataFrame({'x': [1.0 / 3, 2.0], 'label': ['a', 'b']},
                             columns=['x', 'label'])
        path = write_table('t.csv', table, root=str(tmpdir))
        with open(path) as fobj:
            assert fobj.read().splitlines() == ['x,label', '0.3333333333,a',
                                                '2,b']


class TestPGM:

    def test_encode_decode(self):
        pixels = np.array([[0, 1, 65535], [300, 2.6, 70000]])
        raw = encode_pgm(pixels)
        assert raw.startswith(b'P5\n3 2\n65535\n')
        assert np.array_equal(decode_pgm(raw),
                              [[0, 1, 65535], [300, 3, 65535]])

    def test_header_comment(self):
        raw = b'P5\n# made by hand\n2 1\n255\n' + bytes([7, 9])
        assert np.array_equal(decode_pgm(raw), [[7, 9]])

    def test_corrupt(self):
        raw = encode_pgm(np.ones((4, 4)))
        with pytest.raises(ImageFormatError):
            decode_pgm(b'P2' + raw[2:])
        with pytest.raises(ImageFormatError):
            decode_pgm(raw[:-3])
        with pytest.raises(ImageFormatError):
            decode_pgm(b'P5\n4 x\n65535\n')
        with pytest.raises(ImageFormatError):
            encode_pgm(np.ones(4))

    def test_csv(self, tmpdir):
        path = str(tmpdir.join('frame.csv'))
        with open(path, 'w') as fobj:
            fobj.write('1,2,3\n4,5,6\n')
        assert np.array_equal(read_image(path), [[1, 2, 3], [4, 5, 6]])

    def test_save_load(self, tmpdir, image):
        path = save_interferogram(image, 'run/image_0.pgm',
                                  root=str(tmpdir))
        assert exists(path + '.json')
        back = load_interferogram(path)
        assert np.array_equal(back.pixels, np.rint(image.pixels))
        assert back.config == image.config
        assert np.allclose(back.state, image.state)

    def test_load_without_sidecar(self, tmpdir):
        path = str(tmpdir.join('bare.pgm'))
        with open(path, 'wb') as fobj:
            fobj.write(encode_pgm(np.full((2, 20), 5.0)))
        back = load_interferogram(path)
        assert back.config is None
        assert back.pixels.shape == (2, 20)
