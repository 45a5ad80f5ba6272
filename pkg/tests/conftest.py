import re

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(cid: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[cid] = (bool(passed), detail)
    print(f"{'PASS' if passed else 'FAIL'}  {cid}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int(re.match(r"\d+", c).group()), c)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {cid}: {detail}")
