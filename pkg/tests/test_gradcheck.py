"""Gradient-check harness: report format, dispatch, a quick real pass."""

import pytest
import torch

from qroute.errors import ConfigurationError
from qroute.gradcheck import (
    SCOPES,
    GradReport,
    check_encoder,
    check_qsim,
    run_scope,
)

torch.set_num_threads(1)


class TestReport:
    def test_line_format(self):
        report = GradReport(name="thing", parameters=12, max_abs_err=1e-9,
                            max_rel_err=2e-9, worst="w[3]", tolerance=1e-5,
                            passed=True)
        line = report.line()
        assert line.startswith("PASS thing:")
        assert "12 components" in line
        failed = GradReport(name="thing", parameters=12, max_abs_err=1.0,
                            max_rel_err=1.0, worst="w[3]", tolerance=1e-5,
                            passed=False)
        assert failed.line().startswith("FAIL thing:")


class TestDispatch:
    def test_unknown_scope(self):
        with pytest.raises(ConfigurationError):
            run_scope("everything")

    def test_scope_names(self):
        assert set(SCOPES) == {"qsim", "encoder", "critic", "ppo"}


class TestQuickChecks:
    def test_qsim_small_sample_passes(self):
        report = check_qsim(seed=0, circuits=3)
        assert report.passed, report.line()
        assert report.max_abs_err < report.tolerance

    def test_classical_encoder_passes(self):
        report = check_encoder("classical", seed=0)
        assert report.passed, report.line()
