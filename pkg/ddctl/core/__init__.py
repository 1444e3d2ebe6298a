"""Generic engine pieces shared by the data-driven control modules.
"""
import logging

import pkg_resources
from dockerflow import logging as dockerflow_logging

from ddctl.core.initialization import load_default_settings, setup_logging  # NOQA

logger = logging.getLogger(__name__)

__all__ = ["load_default_settings", "setup_logging", "DEFAULT_SETTINGS", "JsonLogFormatter"]

try:
    # Module version, as defined in PEP-0396.
    __version__ = pkg_resources.get_distribution("ddctl").version
except pkg_resources.DistributionNotFound:  # pragma: no cover
    __version__ = "0.0.0.dev0"

DEFAULT_SETTINGS = {
    "project_name": "ddctl",
    "settings_prefix": "ddctl",
    # Monte Carlo worker threads (None: machine parallelism).
    "threads": None,
    # Interior point engine.
    "feas_tol": 1e-8,
    "gap_tol": 1e-8,
    "max_iter": 200,
    "strict_tol": 1e-7,
    "infeasibility_tol": 1e-8,
    # Model-based oracle.
    "dare_tol": 1e-12,
    "dare_max_iter": 100000,
    "lyapunov_tol": 1e-9,
    "defect_tol": 1e-9,
    # Simulation and collection.
    "divergence_guard": 1e150,
    # Design.
    "condition_limit": 1e12,
    "lqr_epsilon": 1e-6,
    # Dynamic programming.
    "vi_eps": 1e-9,
    "vi_max_iter": 1000,
    "pi_eps": 1e-10,
    "pi_max_iter": 50,
    # Random systems.
    "spectral_radius_cap": 0.95,
    "generation_attempts": 100,
}


class JsonLogFormatter(dockerflow_logging.JsonLogFormatter):
    logger_name = "ddctl"

    @classmethod
    def init_from_settings(cls, settings):
        cls.logger_name = settings["project_name"]

    def __init__(self, fmt=None, datefmt=None, style="%"):
        # Do not let the dockerflow constructor use style as the logger_name.
        logger_name = self.logger_name
        super().__init__(fmt, datefmt, style)
        self.logger_name = logger_name
