import logging

from ddctl.core import __version__  # NOQA

# Version of the result file layout, embedded in every output.
ARTIFACT_VERSION = "1"

# Main ddctl logger
logger = logging.getLogger(__name__)
