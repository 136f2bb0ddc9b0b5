"""Acceptance criteria C1-C10, each at its stated tolerance.

The verify suite is run twice with the same seed: the first run supplies the
measured values, the second checks report determinism.
"""
import json

import pytest

from kvnlab.harness.config import default_config
from kvnlab.harness.report import strip_runtime
from kvnlab.harness.verify import RUNTIME_BUDGET, verify_suite

CRITERIA = {
    1: ("symplectic transform and cross form", ["C1.symplectic", "C1.cross_form"]),
    2: ("QMFS classicality over 10 periods", ["C2.classicality"]),
    3: ("back-action evasion and control", ["C3.evasion", "C3.control"]),
    4: ("KvN vs characteristics, second order", ["C4.oracle", "C4.order"]),
    5: ("Sudarshan identity and evolution", ["C5.identity", "C5.evolution"]),
    6: ("superselection", ["C6.expectations", "C6.decoupling", "C6.rejects_Q"]),
    7: ("commutator suite", ["C7.commutators"]),
    8: ("quartic stabilizer", ["C8.unperturbed", "C8.monotone", "C8.neutrality"]),
    9: ("deformation destroys classicality", ["C9.increasing", "C9.baseline"]),
}


@pytest.fixture(scope="session")
def verify_runs(tmp_path_factory):
    mp = pytest.MonkeyPatch()
    reports = []
    for k in range(2):
        mp.setenv("KVNLAB_OUTPUT_ROOT", str(tmp_path_factory.mktemp(f"verify{k}")))
        reports.append(verify_suite(default_config("verify")))
    mp.undo()
    return reports


def _line(n, name, ok, detail):
    return f"ACCEPTANCE C{n} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, verify_runs, capsys):
    report = verify_runs[0]
    name, ids = CRITERIA[n]
    checks = {c.id: c for c in report.checks}
    missing = [i for i in ids if i not in checks]
    ok = not missing and all(checks[i].passed for i in ids)
    detail = "; ".join(f"{i}={checks[i].value!r} ({checks[i].threshold})" for i in ids
                       if i in checks) or f"missing {missing}"
    with capsys.disabled():
        print("\n" + _line(n, name, ok, detail))
    assert not missing, f"checks not reported: {missing}"
    for i in ids:
        assert checks[i].passed, f"{i}: {checks[i].value!r} fails {checks[i].threshold}"


def test_criterion_10(verify_runs, capsys):
    first, second = verify_runs
    a = json.dumps(strip_runtime(first.as_dict()), sort_keys=True)
    b = json.dumps(strip_runtime(second.as_dict()), sort_keys=True)
    identical = a == b
    runtime = max(first.runtime_seconds, second.runtime_seconds)
    ok = identical and runtime < RUNTIME_BUDGET and first.passed
    with capsys.disabled():
        print("\n" + _line(10, "harness determinism and runtime", ok,
                           f"identical={identical}; runtime={runtime:.1f}s (< 300 s)"))
    assert identical
    assert runtime < RUNTIME_BUDGET
    assert not first.errors and first.passed
