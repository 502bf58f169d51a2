"""Shared hooks: acceptance verdicts are echoed in the terminal summary."""

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    RESULTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
