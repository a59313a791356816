"""
Reading and writing interferograms as 16-bit binary PGM images with a JSON
sidecar holding the acquisition metadata. Plain CSV matrices are accepted
as input.
"""
import json
import logging
from os.path import exists

import numpy as np
import pandas as pd

from interferography.exceptions import ImageFormatError
from interferography.extensions.writable import (write_contents_to_file,
                                                 write_json)
from interferography.optics import Interferogram

__all__ = ['encode_pgm', 'decode_pgm', 'read_pgm', 'read_image',
           'save_interferogram', 'load_interferogram', 'sidecar_path']

logger = logging.getLogger(__name__)

MAGIC = b'P5'
MAXVAL = 65535


def sidecar_path(path):
    return path + '.json'


def encode_pgm(pixels):
    ''' P5 bytes of a 2D array, rounded and clipped to 0..65535 and stored
    big-endian. '''
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 2:
        raise ImageFormatError("Only 2D images can be written as PGM.")
    if np.any(pixels > MAXVAL):
        logger.warning("Pixels above %d are saturated in the PGM.", MAXVAL)
    data = np.clip(np.rint(pixels), 0, MAXVAL).astype('>u2')
    height, width = data.shape
    header = b'%s\n%d %d\n%d\n' % (MAGIC, width, height, MAXVAL)
    return header + data.tobytes()


def _header_tokens(raw, count):
    # whitespace-separated header fields, '#' comments skipped
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b'#':
            pos = raw.find(b'\n', pos)
            if pos < 0:
                break
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            break
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def decode_pgm(raw):
    """
    Pixels of a binary (P5) PGM.

    Args:
        raw (bytes): File contents.

    Returns:
        A float ndarray of shape (height, width).
    """
    if raw[:2] != MAGIC:
        raise ImageFormatError("Not a binary PGM: magic %r." % raw[:2])
    tokens, offset = _header_tokens(raw, 4)
    if len(tokens) != 4:
        raise ImageFormatError("Truncated PGM header.")
    try:
        width, height, maxval = [int(t) for t in tokens[1:]]
    except ValueError:
        raise ImageFormatError("Malformed PGM header: %r." % tokens)
    if width < 1 or height < 1 or not 0 < maxval <= MAXVAL:
        raise ImageFormatError("Invalid PGM geometry %dx%d, maxval %d." %
                               (width, height, maxval))
    dtype = np.dtype('u1') if maxval < 256 else np.dtype('>u2')
    size = width * height * dtype.itemsize
    body = raw[offset:offset + size]
    if len(body) != size:
        raise ImageFormatError("PGM data truncated: %d of %d bytes." %
                               (len(body), size))
    return np.frombuffer(body, dtype=dtype).reshape(height, width) \
        .astype(float)


def read_pgm(path):
    with open(path, 'rb') as fobj:
        return decode_pgm(fobj.read())


def read_image(path):
    ''' Pixels of a PGM or a headerless CSV matrix. '''
    if path.lower().endswith('.csv'):
        try:
            return pd.read_csv(path, header=None).to_numpy(dtype=float)
        except (ValueError, pd.errors.ParserError) as e:
            raise ImageFormatError("Cannot read %s as a pixel matrix: %s" %
                                   (path, e))
    return read_pgm(path)


def save_interferogram(image, path, root=None, conflicts='overwrite'):
    ''' Writes the PGM and its sidecar; returns the image path. '''
    written = write_contents_to_file(path, encode_pgm(image.pixels),
                                     content_mode='binary', root=root,
                                     conflicts=conflicts)
    if written is not None:
        write_json(sidecar_path(written), image.meta(), conflicts='overwrite')
    return written


def load_interferogram(path):
    ''' An Interferogram with the metadata of its sidecar, when present. '''
    pixels = read_image(path)
    meta_path = sidecar_path(path)
    if not exists(meta_path):
        logger.debug("No sidecar for %s.", path)
        return Interferogram(pixels, None)
    with open(meta_path, 'r') as fobj:
        try:
            meta = json.load(fobj)
        except ValueError as e:
            raise ImageFormatError("Corrupt sidecar %s: %s" % (meta_path, e))
    return Interferogram.from_meta(pixels, meta)
