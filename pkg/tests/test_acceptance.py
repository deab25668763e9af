"""Acceptance gate: each criterion at its stated tolerance, one pass/fail line apiece."""
import pytest

from roughwave.checks import CHECKS

from conftest import ACCEPTANCE_LINES  # noqa: E402

RUNTIME_LIMIT = {1: 10, 2: 60, 3: 120, 4: 60, 5: 120, 6: 10, 7: 60, 8: 60, 9: 120, 10: 600,
                 11: 1800, 12: 10}


@pytest.mark.parametrize("key", sorted(CHECKS), ids=[f"criterion_{k:02d}" for k in sorted(CHECKS)])
def test_acceptance(key):
    res = CHECKS[key](quick=False)
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert res.seconds < RUNTIME_LIMIT[key], f"runtime {res.seconds:.1f}s over budget"
    assert res.passed, f"{line} {res.detail}"
