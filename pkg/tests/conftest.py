import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)(?:_(\w+))?")

_LABEL = {
    "passed": "PASS",
    "failed": "FAIL",
    "error": "FAIL",
    "xfailed": "EXPECTED FAIL",
    "xpassed": "UNEXPECTED PASS",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance-criterion test at the end
    of the run, whatever the capture settings."""
    lines = []
    for status, label in _LABEL.items():
        for rep in terminalreporter.stats.get(status, []):
            match = _CRITERION.search(getattr(rep, "nodeid", ""))
            if match is None:
                continue
            num = int(match.group(1))
            suffix = (match.group(2) or "").replace("_", " ").strip()
            name = f"criterion {num}" + (f" ({suffix})" if suffix else "")
            lines.append((num, suffix, f"{name}: {label}"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, _, text in sorted(lines):
            terminalreporter.write_line(text)
