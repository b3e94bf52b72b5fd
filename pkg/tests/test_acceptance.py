"""Acceptance criteria 1-12 at seed 7.

Each test prints exactly one ``[PASS]`` / ``[FAIL]`` line, whatever the
outcome, and then asserts. Budgets and tolerances live in ``bllab.suite``;
wall-clock limits are taken from the criterion table.
"""
import shutil
import subprocess
import sys
import time

import pytest

from bllab.suite import CRITERIA, run_criterion, status_line

SEED = 7


def _report(capsys, res, extra_ok=True, note=""):
    res = dict(res, passed=res["passed"] and extra_ok)
    with capsys.disabled():
        print("\n" + status_line(res) + (f"  ({note})" if note else ""), flush=True)
    return res


def _failed_rows(res):
    return [r for r in res["rows"] if not r["ok"]]


@pytest.mark.parametrize("number", [c.number for c in CRITERIA if c.number != 12])
def test_criterion(number, capsys):
    limit = CRITERIA[number - 1].time_limit
    t0 = time.perf_counter()
    res = run_criterion(number, SEED)
    dt = time.perf_counter() - t0
    in_time = limit is None or dt < limit
    res = _report(capsys, res, in_time, f"{dt:.1f} s" + (f" of {limit:.0f} s" if limit else ""))
    assert in_time, f"criterion {number} took {dt:.1f} s, limit {limit} s"
    assert res["passed"], _failed_rows(res)


def _cli_suite():
    exe = shutil.which("bl")
    cmd = [exe] if exe else [sys.executable, "-m", "bllab.cli"]
    return subprocess.run(cmd + ["suite", "--all", "--seed", str(SEED)], capture_output=True)


def test_criterion_12_determinism(capsys):
    res = run_criterion(12, SEED)
    first, second = _cli_suite(), _cli_suite()
    same = first.returncode == second.returncode == 0 and first.stdout == second.stdout
    res = _report(capsys, res, same, "in-process repeat and two CLI runs compared byte for byte")
    assert first.returncode == 0, first.stderr.decode()[-2000:]
    assert first.stdout == second.stdout
    assert res["passed"], _failed_rows(res)
