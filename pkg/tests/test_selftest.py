"""Tester for tem.selftest: oraklene og samlekjøringen."""

import numpy as np
import pytest

from tem import selftest
from tem.selftest import (
    CheckResult, check_qp, dare_doubling, fallback_study, random_stabilizable, run_selftests, scalar_dare,
)
from tem.terminal import solve_dare


class TestDareOracles:
    """Tester for dare_doubling() og scalar_dare()."""

    def test_scalar_closed_form(self):
        assert scalar_dare() == pytest.approx(1.13278, abs=1e-5)

    def test_doubling_matches_scalar(self):
        P = dare_doubling(np.array([[0.5]]), np.array([[1.0]]), np.eye(1), np.eye(1))
        assert P[0, 0] == pytest.approx(scalar_dare(), rel=1e-10)

    def test_doubling_matches_fixed_point(self):
        rng = np.random.default_rng(2)
        A, B = random_stabilizable(rng, n=4, m=2)
        Q, R = np.eye(4), np.eye(2)
        P_fp, _, gamma_d = solve_dare(A, B, Q, R)
        assert gamma_d == 1.0
        assert P_fp == pytest.approx(dare_doubling(A, B, Q, R), rel=1e-6)


def test_qp_oracle():
    result = check_qp(trials=3)
    assert result.name == "qp"
    assert result.passed, result.detail


def test_fallback_loop_stays_in_bounds():
    all_fallback, in_bounds, radius = fallback_study(steps=2, horizon=5)
    assert all_fallback
    assert in_bounds
    assert radius < 1.0


class TestRunSelftests:
    """Tester for run_selftests()."""

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            run_selftests(["finnes_ikke"])

    def test_exception_counts_as_failure(self, monkeypatch):
        def broken():
            raise RuntimeError("knekt")

        monkeypatch.setitem(selftest.CHECKS, "qp", broken)
        (result,) = run_selftests(["qp"])
        assert isinstance(result, CheckResult)
        assert not result.passed
        assert "knekt" in result.detail
