"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

The lines are repeated in an "acceptance criteria" section of the summary.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hjselect.claims import CLAIMS, ClaimContext, identity_table, run_claim

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def ctx():
    return ClaimContext()


@pytest.mark.slow
@pytest.mark.parametrize("fn", CLAIMS, ids=[f"criterion_{i:02d}_{fn.__name__[6:]}" for i, fn in enumerate(CLAIMS, 1)])
def test_criterion(fn, ctx):
    res = run_claim(fn, ctx)
    print("\n" + res.line())
    ACCEPTANCE_LINES.append(res.line())
    assert res.passed, f"{res.line()} tolerance={res.tolerance} {res.detail}"


@pytest.mark.slow
def test_identity_residuals_match_frozen_fixture(ctx):
    frozen = json.loads((FIXTURES / "identity_residuals.json").read_text())
    table = identity_table(ctx)
    for label, rows in frozen["residuals"].items():
        np.testing.assert_allclose(np.array(table[label]), np.array(rows), rtol=1e-6)


@pytest.mark.slow
def test_verify_all_exit_code(tmp_path, capsys):
    from hjselect.cli import main

    code = main(["verify-all", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert out.count("criterion") == 11
    report = json.loads((tmp_path / "report.json").read_text())
    assert sorted(c["id"] for c in report["claims"]) == list(range(1, 12))
    assert code == 0
