import sys
import time

SUITE_BUDGET_S = 60.0
_start = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    elapsed = time.perf_counter() - _start
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(results):
        ok, detail = results[cid]
        if cid == "A9":
            detail += f"; suite runtime {elapsed:.1f} s (<{SUITE_BUDGET_S:.0f})"
            ok = ok and elapsed < SUITE_BUDGET_S
        tr.write_line(f"{cid} {'PASS' if ok else 'FAIL'}: {detail}")
