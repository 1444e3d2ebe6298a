import logging
import time

from logging_color_formatter import ColorFormatter

from ddctl.core import utils

logger = logging.getLogger(__name__)
summary_logger = logging.getLogger("run.summary")

DEFAULT_LOG_FORMAT = "%(levelname)-5.5s  %(message)s"
LOG_FORMATS = ("text", "color", "json")


def load_default_settings(settings, default_settings):
    """Fill ``settings`` with default values when not defined, and
    replace them if defined as environment variable.

    A setting ``threads`` is read from ``THREADS`` or, with precedence,
    from the project prefixed ``DDCTL_THREADS``.

    :param dict settings: explicitly given settings (e.g. from the command line).
    :param dict default_settings: fallback values.
    :returns: a new dict with every known setting.
    :raises ValueError: if both the prefixed and unprefixed keys are given with distinct values.
    """
    settings = dict(settings or {})
    settings_prefix = settings.get("settings_prefix", default_settings.get("settings_prefix"))

    def _prefixed_keys(key):
        unprefixed = key
        if settings_prefix and key.startswith(settings_prefix + "."):
            unprefixed = key.split(".", 1)[1]
        project_prefix = f"{settings_prefix}.{unprefixed}"
        return unprefixed, project_prefix

    for key, default_value in sorted(default_settings.items()):
        keys = _prefixed_keys(key)
        if not set(settings.keys()).intersection(set(keys)):
            settings[key] = default_value

    loaded = {}
    for key, value in sorted(settings.items()):
        value = utils.setting_value(value)
        unprefixed, project_prefix = keys = _prefixed_keys(key)

        defined = set(settings.keys()).intersection(set(keys))
        distinct_values = set([str(settings[d]) for d in defined])
        if len(defined) > 1 and len(distinct_values) > 1:
            names = "', '".join(sorted(defined))
            raise ValueError(f"Settings '{names}' are in conflict.")

        # e.g. THREADS, DDCTL_THREADS
        from_env = utils.env_setting(unprefixed, value)
        from_env = utils.env_setting(project_prefix, from_env)
        loaded[unprefixed] = from_env

    return loaded


def setup_logging(settings, level=logging.INFO, log_format="text", stream=None):
    """Configure the root logger for command-line runs.

    ``text`` uses the plain CLI format, ``color`` the colored console formatter and
    ``json`` emits one structured record per line, with the project name as logger.
    """
    from ddctl.core import JsonLogFormatter

    if log_format not in LOG_FORMATS:
        raise ValueError(f"Unknown log format {log_format!r}")

    handler = logging.StreamHandler(stream)
    if log_format == "json":
        JsonLogFormatter.init_from_settings(settings)
        handler.setFormatter(JsonLogFormatter())
    elif log_format == "color":
        handler.setFormatter(ColorFormatter())
    else:
        handler.setFormatter(logging.Formatter(DEFAULT_LOG_FORMAT))

    root = logging.getLogger()
    for previous in list(root.handlers):
        root.removeHandler(previous)
    root.addHandler(handler)
    root.setLevel(level)
    summary_logger.setLevel(level)
    return handler


class RunSummary:
    """Bound context emitted once per command-line run on the ``run.summary`` logger.

    .. code-block:: python

        summary = RunSummary(command="oracle", seed=7)
        summary.bind(status="ok")
        summary.emit()
    """

    def __init__(self, **context):
        self._started_at = time.monotonic()
        self.context = {"errno": 0}
        self.context.update(context)

    def bind(self, **context):
        self.context.update(context)
        return self.context

    def emit(self):
        self.context["t"] = int((time.monotonic() - self._started_at) * 1000)
        summary_logger.info("", extra=self.context)
        return self.context
