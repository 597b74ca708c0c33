import pytest

from grip.dataset import NoiseSpec, generate_blobs, inject_noise, split


@pytest.fixture(scope="session")
def small_noisy():
    """4-class blobs with 30% symmetric noise on the training split."""
    data = generate_blobs(4, 60, 4, 6.0, 1)
    train, test = split(data, 0.25, 1)
    return inject_noise(train, NoiseSpec("symmetric", 0.3, 1)), test


# acceptance reporting: one PASS/FAIL line per criterion at the end of the run
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    number, title = props["criterion"]
    outcome = "PASS" if report.passed else "FAIL"
    _CRITERIA[number] = (outcome, title, props.get("detail", ""))


def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", tuple(mark.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, title, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {outcome}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
