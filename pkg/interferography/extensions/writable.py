"""
Output paths built from entity patterns and conflict-aware writers for the
JSON and CSV results every command emits.
"""
import json
import logging
import os
import re
import sys
from os.path import join, dirname, exists, islink, isabs, isdir

import numpy as np

from interferography.exceptions import ConfigError
from interferography.utils import splitext, listify

__all__ = ['replace_entities', 'build_path', 'write_contents_to_file',
           'dumps_json', 'write_json', 'write_table', 'CONFLICT_MODES']

logger = logging.getLogger(__name__)

CONFLICT_MODES = ('fail', 'skip', 'overwrite', 'append')


def replace_entities(entities, pattern):
    """
    Fills the {entity} placeholders of a pattern.

    Args:
        entities (dict): Maps entity names (e.g., 'kind', 'index', 'alpha')
            to values.
        pattern (str): A path pattern. '{index}' is replaced by the value
            of 'index'; '{kind<qubit|qudit>}' only matches those values;
            '{seed|0}' falls back to '0' when 'seed' is missing.

    Returns:
        The filled string, or None if a mandatory entity is missing or
        invalid.
    """
    filled = pattern
    for ent in re.findall(r'\{(.*?)\}', pattern):
        match = re.match(r'([^|<]+)(<.*?>)?(\|.*)?$', ent)
        if match is None:
            return None
        name, valid, default = match.groups()
        default = default[1:] if default is not None else None
        value = entities.get(name)
        if value is not None and valid is not None and \
           not re.match('(%s)$' % valid[1:-1], str(value)):
            value = None
        if value is None:
            value = default
        if value is None:
            return None
        filled = filled.replace('{%s}' % ent, str(value))
    return filled


def build_path(entities, path_patterns):
    """
    Returns the first pattern that can be filled from `entities`.

    Args:
        entities (dict): Entity values.
        path_patterns (str, list): Candidate patterns; square brackets mark
            optional chunks dropped when their entities are missing, e.g.
            'run/[alpha-{alpha}_]image_{index}.pgm'.

    Returns:
        A path string, or None if no pattern matches.
    """
    for pattern in listify(path_patterns):
        path = pattern
        for chunk in re.findall(r'\[(.*?)\]', pattern):
            path = path.replace('[%s]' % chunk,
                                replace_entities(entities, chunk) or '')
        path = replace_entities(entities, path)
        if path:
            return path
    return None


def _resolve_conflict(path, conflicts):
    # Returns the path to write to, or None to skip.
    if not (exists(path) or islink(path)):
        return path
    if conflicts == 'fail':
        raise ConfigError("A file at path %s already exists." % path)
    if conflicts == 'skip':
        logger.warning("A file at path %s already exists, skipping.", path)
        return None
    if conflicts == 'overwrite':
        if isdir(path):
            logger.warning("%s is a directory, not overwriting it.", path)
            return None
        os.remove(path)
        return path
    for i in range(1, sys.maxsize):
        parts = splitext(path)
        parts[0] = '%s_%d' % (parts[0], i)
        candidate = os.extsep.join(parts)
        if not exists(candidate) and not islink(candidate):
            return candidate


def write_contents_to_file(path, contents, content_mode='text', root=None,
                           conflicts='fail'):
    """
    Writes text or bytes to a path, creating parent directories.

    Args:
        path (str): Destination path.
        contents (str, bytes): What to write.
        content_mode (str): 'text' or 'binary'.
        root (str): Directory relative paths are resolved against; the
            working directory by default.
        conflicts (str): 'fail' raises if the path exists, 'skip' leaves it,
            'overwrite' replaces it, 'append' writes to path_1, path_2, ...

    Returns:
        The path written to, or None if skipped.
    """
    if conflicts not in CONFLICT_MODES:
        raise ConfigError("conflicts must be one of %s; got %r." %
                          (', '.join(CONFLICT_MODES), conflicts))
    if contents is None:
        raise ConfigError("No contents given for %s." % path)
    if root is None and not isabs(path):
        root = os.getcwd()
    if root:
        path = join(root, path)
    path = _resolve_conflict(path, conflicts)
    if path is None:
        return None
    if dirname(path) and not exists(dirname(path)):
        os.makedirs(dirname(path))
    mode = 'wb' if content_mode == 'binary' else 'w'
    with open(path, mode) as fobj:
        fobj.write(contents)
    logger.debug("Wrote %s", path)
    return path


def _to_builtin(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError("%r is not JSON serializable" % (obj,))


def dumps_json(data):
    ''' Deterministic JSON text: sorted keys, fixed indent, numpy scalars
    and sets converted. '''
    return json.dumps(data, sort_keys=True, indent=2,
                      default=_to_builtin) + '\n'


def write_json(path, data, root=None, conflicts='overwrite'):
    return write_contents_to_file(path, dumps_json(data), root=root,
                                  conflicts=conflicts)


def write_table(path, table, root=None, conflicts='overwrite'):
    ''' Writes a DataFrame as CSV with a fixed float format. '''
    return write_contents_to_file(
        path, table.to_csv(index=False, float_format='%.10g'), root=root,
        conflicts=conflicts)
