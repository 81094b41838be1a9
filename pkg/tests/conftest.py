import numpy as np
import pytest

from radpipe.lexicon import Lexicon


@pytest.fixture
def liver_lexicon() -> Lexicon:
    return Lexicon.build(
        ["肝脏", "轮廓规整", "形态大小正常", "肝实质", "密度不均匀", "肝右叶", "肝叶", "低密度灶", "肝", "肝S8"],
        [("肝脏", ["肝", "肝S8"]), ("肝叶", ["肝右叶"])],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    notes = [v for k, v in item.user_properties if k == "note"]
    item.config.stash.setdefault(_RESULTS, {})[number] = (title, rep.passed, rep.duration, notes)


_RESULTS = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, duration, notes = results[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:>2}  {status}  {title}  ({duration:.1f} s)"
        terminalreporter.write_line(line)
        for note in notes:
            terminalreporter.write_line(f"                {note}")
