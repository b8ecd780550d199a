"""Acceptance criteria, one test per criterion with pinned tolerances.

Each test prints a single PASS/FAIL line to the terminal.
"""

import numpy as np
import pytest

from mlcomp import verify
from mlcomp.algorithms import corollary1_params, corollary2_params


@pytest.fixture
def report(capsys):
    def emit(number, res, extra=""):
        with capsys.disabled():
            print(f"\n[criterion {number}] {res.line()} {extra}".rstrip())

    return emit


def test_criterion_01_chain_rule(report):
    res = verify.gate_chain_rule(n_points=20, h=1e-5, tol=1e-5)
    report(1, res)
    assert res.passed and res.seconds < 5.0


def test_criterion_02_tracking(report):
    res = verify.gate_tracking(T=1000, tol=1e-10)
    report(2, res)
    assert res.passed and res.seconds < 10.0


def test_criterion_03_reduction(report):
    res = verify.gate_reduction(T=200, tol=1e-12)
    report(3, res)
    assert res.passed


def test_criterion_04_storm_collapse(report):
    res = verify.gate_storm(T=200, tol=1e-12)
    report(4, res)
    assert res.passed


def test_criterion_05_ordering(report):
    res = verify.gate_ordering()
    report(5, res)
    assert res.passed and res.seconds < 60.0


def test_criterion_06_consensus(report):
    res = verify.gate_consensus(tol=1e-8)
    report(6, res)
    assert res.passed


def test_criterion_07_level_independence(report):
    res = verify.gate_levels(max_ratio=3.5)
    report(7, res)
    assert res.passed


def test_criterion_08_variance_averaging(report):
    res = verify.gate_averaging()
    report(8, res)
    assert res.passed


def test_criterion_09_schedule_arithmetic(report):
    c1 = corollary1_params(np.sqrt(0.1), 1 / 3)
    c2 = corollary2_params(0.1, 0.0)
    ok = (abs(c1.eta - 0.1) <= 1e-15 and c1.T == 225
          and abs(c2.eta - 0.1) <= 1e-15 and c2.S == 10 and c2.T == 1000)
    res = verify.GateResult("schedules", ok, 0.0, 0.0,
                            f"c1 eta={c1.eta!r} T={c1.T}; c2 eta={c2.eta!r} S={c2.S} T={c2.T}")
    report(9, res)
    assert ok


def test_criterion_10_topology(report):
    res = verify.gate_topology(n_trials=100, tol=1e-10)
    report(10, res)
    assert res.passed
