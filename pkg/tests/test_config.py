"""
Tests for configuration files and overrides.
"""
import os
import tempfile
import unittest

import pytest

from freshness_mdp.config import build_spec, canonical_key, load_spec, parse_config_text
from freshness_mdp.exceptions import ConfigurationError, ParseError, ValidationError

SWEEP_Q = """
# request probability sweep
family = aoi2-sweep-q
q = 0.1, 0.2, 0.3   # swept
alpha_min = 0.1
alpha_max = 0.5
bmax = 5, 10
epsV = 0.01
T = 1000
runs = 20
"""


class TestParseConfigText(unittest.TestCase):
    """Tests for the key = value format."""

    def test_values_and_lists(self):
        """Test comments, lists and key translation."""
        values = parse_config_text(SWEEP_Q)
        self.assertEqual(values["family"], "aoi2-sweep-q")
        self.assertEqual(values["q"], ["0.1", "0.2", "0.3"])
        self.assertEqual(values["b_max"], ["5", "10"])
        self.assertEqual(values["eps_v"], "0.01")
        self.assertEqual(values["horizon_T"], "1000")
        self.assertEqual(values["n_runs"], "20")

    def test_missing_equals(self):
        """Test that the error names the offending line."""
        with self.assertRaises(ParseError) as cm:
            parse_config_text("family = solve\nq 0.3\n", source="bad.conf")
        self.assertEqual(cm.exception.line, 2)
        self.assertIn("line 2", str(cm.exception))

    def test_empty_value(self):
        """Test that 'key =' is rejected."""
        with self.assertRaises(ParseError):
            parse_config_text("q =\n")

    def test_repeated_key(self):
        """Test that a key given twice is rejected."""
        with self.assertRaises(ParseError) as cm:
            parse_config_text("q = 0.1\nq = 0.2\n")
        self.assertEqual(cm.exception.line, 2)

    def test_alias_counts_as_repeat(self):
        """Test that 'method' and 'methods' are the same key."""
        with self.assertRaises(ParseError):
            parse_config_text("method = token\nmethods = cmdp\n")

    def test_unknown_key(self):
        """Test that unknown keys raise ConfigurationError with the line."""
        with self.assertRaises(ConfigurationError) as cm:
            parse_config_text("family = solve\nlambda = 3\n")
        self.assertEqual(cm.exception.details["line"], 2)


class TestBuildSpec(unittest.TestCase):
    """Tests for validation into ExperimentSpec."""

    def test_sweep_becomes_grid(self):
        """Test that the swept key fills the grid and keeps its order."""
        spec = build_spec(parse_config_text(SWEEP_Q))
        self.assertEqual(spec.grid, [0.1, 0.2, 0.3])
        self.assertIsNone(spec.q)
        self.assertEqual(spec.b_max, [5, 10])
        self.assertEqual(spec.eps_v, 0.01)

    def test_single_value_sweep(self):
        """Test a one-point grid."""
        spec = build_spec({"family": "aoii-sweep-alpha", "alpha": "0.2", "p_R": 0.8})
        self.assertEqual(spec.grid, [0.2])
        self.assertEqual(spec.resolved_delta_max, 30)
        self.assertEqual(spec.resolved_b_max, [5, 10, 20])

    def test_out_of_range_probability(self):
        """Test that q = 1.5 names q in the error."""
        with self.assertRaises(ValidationError) as cm:
            build_spec({"family": "solve", "model": "two-rate", "q": 1.5, "alpha_max": 0.5})
        self.assertEqual(cm.exception.field, "q")
        self.assertTrue(str(cm.exception).startswith("q: "))

    def test_out_of_range_grid(self):
        """Test that a bad swept value is reported under the swept field."""
        with self.assertRaises(ValidationError) as cm:
            build_spec({"family": "aoi2-sweep-q", "q": [0.2, 1.5], "alpha_max": 0.5})
        self.assertIn("q", str(cm.exception))

    def test_missing_requirement(self):
        """Test that a sweep without its fixed parameters is rejected."""
        with self.assertRaises(ValidationError) as cm:
            build_spec({"family": "aoi2-sweep-q", "q": [0.2]})
        self.assertIn("alpha_max", str(cm.exception))

    def test_unknown_method(self):
        """Test that only known methods are accepted."""
        with self.assertRaises(ValidationError):
            build_spec({"family": "aoi2-sweep-q", "q": [0.2], "alpha_max": 0.5,
                        "methods": "token,oracle"})

    def test_solve_needs_model(self):
        """Test that solve without a model is rejected."""
        with self.assertRaises(ValidationError):
            build_spec({"family": "solve", "q": 0.3, "alpha_max": 0.5})


class TestLoadSpec(unittest.TestCase):
    """Tests for files plus command-line overrides."""

    def setUp(self):
        handle, self.path = tempfile.mkstemp(suffix=".conf")
        with os.fdopen(handle, "w") as f:
            f.write(SWEEP_Q)

    def tearDown(self):
        os.remove(self.path)

    def test_file_only(self):
        """Test reading a file without overrides."""
        spec = load_spec(self.path)
        self.assertEqual(spec.family, "aoi2-sweep-q")
        self.assertEqual(spec.n_runs, 20)

    def test_overrides_win(self):
        """Test that flags replace file values and None flags are ignored."""
        spec = load_spec(self.path, {"bmax": [3], "seed": 42, "T": None, "epsLambda": 0.05})
        self.assertEqual(spec.b_max, [3])
        self.assertEqual(spec.seed, 42)
        self.assertEqual(spec.horizon_T, 1000)
        self.assertEqual(spec.eps_lambda, 0.05)

    def test_overrides_alone(self):
        """Test building a spec without a file."""
        spec = load_spec(None, {"family": "solve", "model": "aoii", "pR": 0.7, "alpha": 0.1})
        self.assertEqual(spec.resolved_methods, ["token"])
        self.assertEqual(spec.resolved_b_max, [5])

    def test_missing_file(self):
        """Test that a missing file is a configuration error."""
        with self.assertRaises(ConfigurationError):
            load_spec(self.path + ".missing")


@pytest.mark.parametrize("key,field", [
    ("pR", "p_R"), ("ps", "p_s"), ("bmax", "b_max"), ("epsV", "eps_v"),
    ("epsLambda", "eps_lambda"), ("T", "horizon_T"), ("runs", "n_runs"),
    ("method", "methods"), ("p_R", "p_R"),
])
def test_canonical_key(key, field):
    """File keys and field names both resolve to the field."""
    assert canonical_key(key) == field


def test_canonical_key_unknown():
    """Unknown keys raise ConfigurationError naming the key."""
    with pytest.raises(ConfigurationError) as excinfo:
        canonical_key("rho")
    assert excinfo.value.details["parameter"] == "rho"


SAMPLES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "samples")


@pytest.mark.parametrize("name", sorted(os.listdir(SAMPLES)) if os.path.isdir(SAMPLES) else [])
def test_sample_configurations_load(name):
    """Every shipped sample configuration validates."""
    spec = load_spec(os.path.join(SAMPLES, name))
    assert spec.family in name.replace("_", "-")


if __name__ == "__main__":
    unittest.main()
