import os
import re

import numpy as np
from os.path import join, dirname, basename


def natural_sort(l, field=None):
    ''' Sorts strings (or objects, by the named attribute) so that embedded
    integers compare numerically: image_2.pgm comes before image_10.pgm. '''
    convert = lambda text: int(text) if text.isdigit() else text.lower()

    def alphanum_key(key):
        if field is not None:
            key = getattr(key, field)
        if not isinstance(key, str):
            key = str(key)
        return [convert(c) for c in re.split('([0-9]+)', key)]
    return sorted(l, key=alphanum_key)


def splitext(path):
    """ Splits a path into its stem and every extension, so that
    'run/image_1.pgm.json' -> ['run/image_1', 'pgm', 'json']. """
    stem = join(dirname(path), basename(path).split(os.extsep)[0])
    return [stem] + basename(path).split(os.extsep)[1:]


def listify(obj, ignore=(list, tuple, type(None))):
    ''' Wraps all non-list or tuple objects in a list; provides a simple way
    to accept flexible arguments. '''
    return obj if isinstance(obj, ignore) else [obj]


def wrap_phase(phase):
    ''' Wraps angles (scalar or array) to the interval (-pi, pi]. '''
    wrapped = -((-np.asarray(phase, dtype=float) + np.pi) % (2 * np.pi)
                - np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def parse_angle(value):
    """
    Converts an angle given on the command line or in a config file to
    radians.

    Args:
        value (str, float): A number in radians, or a string with a 'deg'
            suffix (e.g., '22.5deg') to be read in degrees.

    Returns:
        The angle in radians, as a float.
    """
    if isinstance(value, (int, float)):
        return float(value)
    text = value.strip().lower()
    if text.endswith('deg'):
        return float(np.deg2rad(float(text[:-3])))
    if text.endswith('rad'):
        text = text[:-3]
    return float(text)
