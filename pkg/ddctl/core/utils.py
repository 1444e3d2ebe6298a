import hashlib
import os

import numpy as np
import ujson as json

from ddctl.core.errors import DimensionError

ENV_KEY_TABLE = str.maketrans({".": "_", "-": "_"})


def canonical_json(v):
    """Serialize ``v`` with sorted keys and no extra whitespace.

    :rtype: str
    """
    return json.dumps(v, sort_keys=True, escape_forward_slashes=False)


def setting_value(value):
    """Decode a setting given as text, e.g. ``"4"`` for ``threads`` or ``"1e-8"`` for a
    tolerance. Text that is not JSON (``json``, ``color``) stays a string.
    """
    if not isinstance(value, str):
        return value
    try:
        return json.loads(value)
    except ValueError:
        return value


def env_setting(key, default):
    """Value of the ``ddctl.threads`` style ``key`` from ``DDCTL_THREADS``, decoded with
    :func:`setting_value`, or ``default`` untouched when the variable is unset.
    """
    name = key.translate(ENV_KEY_TABLE).upper()
    if name not in os.environ:
        return default
    return setting_value(os.environ[name])


def sha256_digest(message, encoding="utf-8"):
    """Return the hex SHA-256 digest of a string."""
    if isinstance(message, str):
        message = message.encode(encoding)
    return hashlib.sha256(message).hexdigest()


def to_plain(value):
    """Recursively convert numpy containers and scalars into JSON friendly values.

    Matrices become lists of rows, vectors flat lists.
    """
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    return value


def as_matrix(value, name="matrix", shape=None):
    """Coerce ``value`` into a 2-D float array, checking its ``shape`` if given.

    :raises ddctl.core.errors.DimensionError: on shape mismatch or non finite entries.
    """
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise DimensionError(f"{name} is not a numeric matrix", original=e)
    if array.ndim == 1 and shape is not None and len(shape) == 2 and shape[0] == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {array.shape}")
    if shape is not None and tuple(array.shape) != tuple(shape):
        raise DimensionError(
            f"{name} has shape {array.shape}, expected {tuple(shape)}",
            details={"name": name, "shape": list(array.shape), "expected": list(shape)},
        )
    if not np.all(np.isfinite(array)):
        raise DimensionError(f"{name} has non finite entries")
    return array


def as_vector(value, name="vector", size=None):
    try:
        array = np.array(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as e:
        raise DimensionError(f"{name} is not a numeric vector", original=e)
    if size is not None and array.shape[0] != size:
        raise DimensionError(f"{name} has length {array.shape[0]}, expected {size}")
    if not np.all(np.isfinite(array)):
        raise DimensionError(f"{name} has non finite entries")
    return array
