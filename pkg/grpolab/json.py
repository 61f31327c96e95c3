"""
The standard json module, with an encoder that knows the package's value types.

Metrics, reports and summaries go through ``dump``/``dumps`` here, so numpy
values, result records and NaN markers never need converting at call sites.
"""
import collections
import math

from json import (load, loads, JSONEncoder, JSONDecoder, JSONDecodeError,  # noqa: F401
                  dump as _stdlib_dump, dumps as _stdlib_dumps)

import numpy as np


class ExtendedEncoder(JSONEncoder):
    """
    Encodes what the built-in encoder rejects:

    - numpy arrays, scalars and bools, as their plain python values
    - anything with a ``to_record()`` method (results, reports, stats), as that mapping
    - other Mapping and Sequence types (e.g. ruamel.yaml.CommentedMap), as dict and list
    - sets and frozensets, as sorted lists

        >>> dumps({"a": np.arange(3, dtype=np.uint32), "b": {2, 1}})
        '{"a": [0, 1, 2], "b": [1, 2]}'
    """
    def default(self, o):
        if isinstance(o, (np.ndarray, np.number, np.bool_)):
            return o.tolist()
        if hasattr(o, "to_record"):
            return o.to_record()
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        if isinstance(o, collections.abc.Mapping) and not isinstance(o, dict):
            return {str(k): v for k, v in o.items()}
        if isinstance(o, collections.abc.Sequence) and not isinstance(o, (list, str, bytes)):
            return list(o)
        return super().default(o)


def finite_or_none(x):
    """NaN (the 'absent' marker in numeric series) becomes JSON null."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return x


def dump(obj, fp, **kwargs):
    kwargs.setdefault('cls', ExtendedEncoder)
    return _stdlib_dump(obj, fp, **kwargs)


def dumps(obj, **kwargs):
    kwargs.setdefault('cls', ExtendedEncoder)
    return _stdlib_dumps(obj, **kwargs)
