from jsonschema import ValidationError
from jsonschema.validators import validator_for

from ddctl.core.errors import ConfigurationError

MATRIX = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
}

SYSTEM_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "A": MATRIX,
        "B": MATRIX,
    },
    "required": ["A", "B"],
    "additionalProperties": False,
}

WEIGHTS_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {"Q": MATRIX, "R": MATRIX},
    "required": ["Q", "R"],
    "additionalProperties": False,
}

DATA_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "kind": {"enum": ["on-policy", "off-policy"]},
        "scheme": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "S": MATRIX,
        "H": MATRIX,
        "sample_count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "params": {"type": "object"},
    },
    "required": ["kind", "scheme", "n", "m", "S", "H", "sample_count"],
    "additionalProperties": False,
}

RECORD_SCHEMAS = {"system": SYSTEM_SCHEMA, "weights": WEIGHTS_SCHEMA, "data": DATA_SCHEMA}

# Module level global that stores every schema turned into a validator instance.
_schema_cache = {}


def validate(data, schema):
    """Raise a ValidationError if the data doesn't validate with the given schema.

    Same as `jsonschema.validate()` with validators memoized by schema.
    """
    cache_key = str(schema)
    if cache_key not in _schema_cache:
        cls = validator_for(schema)
        cls.check_schema(schema)
        _schema_cache[cache_key] = cls(schema)
    return _schema_cache[cache_key].validate(data)


def validate_record(name, data):
    """Validate a record exchanged through files (``system``, ``weights`` or ``data``).

    :raises ConfigurationError: with the failing path in the details.
    """
    try:
        validate(data, RECORD_SCHEMAS[name])
    except ValidationError as e:
        path = ".".join(str(p) for p in e.path)
        raise ConfigurationError(
            f"Invalid {name} record: {e.message}",
            details={"section": name, "path": path},
            original=e,
        )
    return data
