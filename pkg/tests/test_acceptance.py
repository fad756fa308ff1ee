"""One test per acceptance criterion, each at its stated tolerance and time budget.

Each test writes its pass/fail line straight to the terminal, even under capture.
"""
import pytest

from maskcfg.validation import CHECKS, run_check


@pytest.mark.parametrize("key", sorted(CHECKS))
def test_criterion(key, capsys):
    res = run_check(key)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


@pytest.mark.parametrize("key", [4, 5])
def test_fault_injection_is_caught(key, capsys):
    res = run_check(key, quick=True, fault="coefficient")
    with capsys.disabled():
        print("\n(negative control) " + res.line())
    assert not res.passed
