from __future__ import annotations

from hypothesis import strategies as st

from berryyield.geometry import BoundingBox


@st.composite
def boxes(draw, lo: float = -1000.0, hi: float = 1000.0, min_size: float = 0.01):
    x0 = draw(st.floats(lo, hi))
    y0 = draw(st.floats(lo, hi))
    w = draw(st.floats(min_size, 500.0))
    h = draw(st.floats(min_size, 500.0))
    return BoundingBox(x0, y0, x0 + w, y0 + h)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        results = ACCEPTANCE[n]
        ok = all(passed for passed, _ in results)
        failed = [d for passed, d in results if not passed]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += "  (" + "; ".join(failed) + ")"
        terminalreporter.write_line(line)
