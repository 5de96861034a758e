import pytest

from wolbachia_release.bubble import min_bubble_radius
from wolbachia_release.reaction import ReactionCurve, build_reaction

CUBIC_A = 0.3


@pytest.fixture(scope="session")
def curve():
    return build_reaction()


@pytest.fixture(scope="session")
def cubic():
    """f(p) = p (p - a)(1 - p) with a = 0.3, a cheap bistable test curve."""
    a = CUBIC_A
    return ReactionCurve.from_polynomial([0.0, -a, 1.0 + a, -1.0])


@pytest.fixture(scope="session")
def minimal(curve):
    return min_bubble_radius(curve, 1.0)


_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when != "call" and rep.passed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected)"
    elif rep.passed:
        status = "PASS"
    else:
        status = "FAIL"
    _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {status:<16} {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
