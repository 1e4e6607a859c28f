"""
Tests for the settings block
"""

import pytest
from pydantic import ValidationError

from qroute.config import Settings


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.walk_c1 == 9.0
        assert settings.walk_repetition_constant == 48.0
        assert settings.transcript_window == 4096

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("QROUTE_WALK_T_SCALE", "40")
        assert Settings().walk_t_scale == 40.0

    def test_override_returns_a_copy(self):
        base = Settings()
        changed = base.override({"walk_c1": 4.0, "lb_pair_budget": 10})
        assert (changed.walk_c1, changed.lb_pair_budget) == (4.0, 10)
        assert base.walk_c1 == 9.0

    def test_unknown_constant(self):
        with pytest.raises(KeyError, match="no_such"):
            Settings().override({"no_such": 1})

    def test_values_are_validated(self):
        with pytest.raises(ValidationError):
            Settings().override({"walk_c1": 0.5})
