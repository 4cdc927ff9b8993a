"""Experiment configuration files.

One TOML file describes one experiment: a versioned header, the model and
the sections read by each command. Every table has a closed key set and a
misspelled key is a hard error.

    schema = 1

    [model]
    family = "mean_field"
    ...

    [model.drift]
    kind = "linear"
    ...
"""

import copy as _copy
try:
    import tomllib as _tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _tomllib
from pychaos.utils import interactive as _interactive


SCHEMA_VERSION = 1

TOP_LEVEL_KEYS = ('schema', 'model', 'scan', 'lln', 'oracle')


class ConfigException(Exception):
    pass


@_interactive
def load(path):
    """Read and check the header of a configuration file.

    Keyword arguments:
    path -- TOML file name

    Returns:
    table -- nested dict with the file contents

    Raises ConfigException
    """
    try:
        with open(path, 'rb') as f:
            table = _tomllib.load(f)
    except _tomllib.TOMLDecodeError as e:
        raise ConfigException("could not parse '{0}': {1}".format(path, e))
    return check_header(table)


def loads(text):
    """Same as load, from a string."""
    try:
        table = _tomllib.loads(text)
    except _tomllib.TOMLDecodeError as e:
        raise ConfigException('could not parse config: {0}'.format(e))
    return check_header(table)


def check_header(table):
    if 'schema' not in table:
        raise ConfigException("missing 'schema' key (expected schema = {0})".format(
            SCHEMA_VERSION))
    if table['schema'] != SCHEMA_VERSION:
        raise ConfigException('unsupported schema {0!r} (expected {1})'.format(
            table['schema'], SCHEMA_VERSION))
    check_keys(table, TOP_LEVEL_KEYS, 'top level')
    return table


def check_keys(table, allowed, where, required=()):
    """Reject unknown keys and report missing required ones.

    Raises ConfigException naming the table and the offending key.
    """
    if not isinstance(table, dict):
        raise ConfigException("'{0}' must be a table".format(where))
    for key in table:
        if key not in allowed:
            raise ConfigException("unknown key '{0}' in [{1}]".format(key, where))
    for key in required:
        if key not in table:
            raise ConfigException("missing key '{0}' in [{1}]".format(key, where))


def section(table, name, where=None):
    """Return sub-table 'name', raising ConfigException when absent."""
    where = name if where is None else where + '.' + name
    if name not in table:
        raise ConfigException("missing table [{0}]".format(where))
    value = table[name]
    if not isinstance(value, dict):
        raise ConfigException("'{0}' must be a table".format(where))
    return value


def override(table, path, value):
    """Return a deep copy of 'table' with the dotted 'path' set to 'value'."""
    table = _copy.deepcopy(table)
    keys = path.split('.')
    node = table
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return table


def coerce(value, kind, key, where):
    """Return kind(value), raising ConfigException naming [where] and 'key'
    when the value does not convert."""
    try:
        return kind(value)
    except (TypeError, ValueError):
        expected = {int: 'an integer', float: 'a number'}.get(kind, kind.__name__)
        raise ConfigException("'{0}' in [{1}] must be {2}, got {3!r}".format(
            key, where, expected, value))
