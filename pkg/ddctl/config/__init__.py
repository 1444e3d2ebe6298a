import logging

import colander

from ddctl.core import DEFAULT_SETTINGS
from ddctl.core import load_default_settings as core_load_default_settings
from ddctl.core.artifacts import read_json
from ddctl.core.errors import ConfigurationError
from ddctl.core.utils import canonical_json, sha256_digest
from ddctl.schema import ExperimentConfig

logger = logging.getLogger(__name__)

# Sections of result files, ignored when a result is given back as configuration.
RESULT_SECTIONS = ("meta", "status", "result", "report", "oracle")

# Sections each subcommand cannot run without. Alternatives are listed as tuples.
REQUIRED_SECTIONS = {
    "simulate": ("system", "simulation"),
    "collect": ("system", "collection"),
    "eval-stability": (("data", "system"),),
    "eval-cost": (("data", "system"), "weights"),
    "design-stab": (("data", "system"),),
    "design-lqr": (("data", "system"), "weights"),
    "pi": ("system", "weights"),
    "vi": (("data", "system"), "weights"),
    "oracle": ("system", "weights"),
    "mc-validity": ("system", "collection", "mc"),
    "gen": ("generator",),
}


def load_default_settings(settings=None):
    """Settings with every default filled and environment overrides applied."""
    return core_load_default_settings(settings or {}, DEFAULT_SETTINGS)


def read_config(path):
    """Parse a JSON configuration file (an empty document when ``path`` is ``None``)."""
    if path is None:
        return {}
    try:
        document = read_json(path)
    except OSError as e:
        raise ConfigurationError(f"Cannot read configuration {path}", original=e)
    except ValueError as e:
        raise ConfigurationError(f"Configuration {path} is not valid JSON", original=e)
    if not isinstance(document, dict):
        raise ConfigurationError(f"Configuration {path} must be a JSON object")
    return document


def validate_config(document, command):
    """Deserialize ``document`` and check the sections ``command`` requires.

    :raises ConfigurationError: on unknown keys, invalid values or missing sections.
    """
    try:
        config = ExperimentConfig().deserialize(document)
    except colander.Invalid as e:
        raise ConfigurationError("Invalid configuration", details=e.asdict(), original=e)

    for required in REQUIRED_SECTIONS[command]:
        alternatives = required if isinstance(required, tuple) else (required,)
        if not any(section in config for section in alternatives):
            raise ConfigurationError(
                f"Command {command} requires a {' or '.join(alternatives)} section",
                details={"command": command, "missing": list(alternatives)},
            )
    logger.debug(f"Configuration sections: {', '.join(sorted(config))}")
    return config


def config_hash(config):
    """SHA-256 of the canonical JSON form of a validated configuration."""
    relevant = {k: v for k, v in config.items() if k not in RESULT_SECTIONS}
    return sha256_digest(canonical_json(relevant))
