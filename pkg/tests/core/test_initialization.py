import os
import unittest
from unittest import mock

from ddctl.core import DEFAULT_SETTINGS, load_default_settings


class DefaultSettingsTest(unittest.TestCase):
    def test_defaults_are_filled(self):
        settings = load_default_settings({}, DEFAULT_SETTINGS)
        self.assertEqual(settings["strict_tol"], 1e-7)
        self.assertEqual(settings["feas_tol"], 1e-8)
        self.assertEqual(settings["lqr_epsilon"], 1e-6)
        self.assertIsNone(settings["threads"])

    def test_given_settings_override_defaults(self):
        settings = load_default_settings({"max_iter": 50}, DEFAULT_SETTINGS)
        self.assertEqual(settings["max_iter"], 50)

    def test_prefixed_settings_are_unprefixed(self):
        settings = load_default_settings({"ddctl.max_iter": 50}, DEFAULT_SETTINGS)
        self.assertEqual(settings["max_iter"], 50)
        self.assertNotIn("ddctl.max_iter", settings)

    def test_string_values_are_coerced(self):
        settings = load_default_settings({"max_iter": "50"}, DEFAULT_SETTINGS)
        self.assertEqual(settings["max_iter"], 50)

    def test_conflicting_settings_raise(self):
        with self.assertRaises(ValueError) as cm:
            load_default_settings({"max_iter": 1, "ddctl.max_iter": 2}, DEFAULT_SETTINGS)
        self.assertIn("in conflict", str(cm.exception))

    def test_environment_overrides_unprefixed(self):
        with mock.patch.dict(os.environ, {"THREADS": "3"}):
            settings = load_default_settings({}, DEFAULT_SETTINGS)
        self.assertEqual(settings["threads"], 3)

    def test_prefixed_environment_has_precedence(self):
        with mock.patch.dict(os.environ, {"THREADS": "3", "DDCTL_THREADS": "5"}):
            settings = load_default_settings({}, DEFAULT_SETTINGS)
        self.assertEqual(settings["threads"], 5)

    def test_defaults_are_not_mutated(self):
        load_default_settings({"max_iter": 3}, DEFAULT_SETTINGS)
        self.assertEqual(DEFAULT_SETTINGS["max_iter"], 200)
