from .writable import (replace_entities, build_path, write_contents_to_file,
                       write_json, write_table)


__all__ = [
    'replace_entities',
    'build_path',
    'write_contents_to_file',
    'write_json',
    'write_table',
]
