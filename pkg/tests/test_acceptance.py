"""Acceptance criteria at their stated tolerances; one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -s``; the full set takes a
few minutes on one core.
"""

import pytest

from evlab.experiments import Suite

CASES = {
    1: "doubling-dichotomy",
    2: "noise-removes-clustering",
    3: "compound-poisson-at-fixed-point",
    4: "poisson-without-clustering",
    5: "eventually-aperiodic-target",
    6: "hitting-and-return-times",
    7: "spectral-ulam-ladder",
    8: "spectral-survival-vs-monte-carlo",
    9: "exact-property-suites",
    10: "dprime-diagnostic-along-n",
}


@pytest.fixture(scope="module")
def suite():
    return Suite()


@pytest.mark.parametrize("number", list(CASES), ids=list(CASES.values()))
def test_criterion(suite, number, capsys):
    res = getattr(suite, f"criterion{number}")()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.summary
