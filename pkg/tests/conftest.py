import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "oracle equivalence (SP vs brute-force MAP, Viterbi vs brute-force ML)",
    2: "decisions invariant to per-time positive scaling",
    3: "cross-entropy gradients vs central finite differences",
    4: "transition histogram accuracy",
    5: "learned-SP SER close to exact SP at perfect CSI",
    6: "learned-SP beats mismatched SP under CSI uncertainty",
    7: "RS/CRC roundtrip and no undetected block errors",
    8: "blockwise tracking ordering",
    9: "bit-identical CSV on rerun",
    10: "node evaluations linear in t",
}

_results: dict = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    n = int(match.group(1))
    if report.when == "call" or report.failed or report.skipped:
        detail = dict(report.user_properties).get("detail", "")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if n not in _results or _results[n][0] == "PASS":
            _results[n] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, detail = _results[n]
        line = f"criterion {n:2d} {status}: {CRITERIA.get(n, '')}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
