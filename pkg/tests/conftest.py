import time

import pytest

from binpose import codebook as cbm
from binpose.camera import CameraIntrinsics
from binpose.objects import chicken

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by this test")


@pytest.fixture(scope="session")
def default_object():
    return chicken()


@pytest.fixture(scope="session")
def built_codebook(default_object):
    """Default 162x12 codebook and its build time in seconds."""
    start = time.perf_counter()
    cb = cbm.build(default_object, CameraIntrinsics(), cbm.ViewSampling())
    return cb, time.perf_counter() - start


@pytest.fixture(scope="session")
def default_codebook(built_codebook):
    return built_codebook[0]


@pytest.fixture(scope="session")
def codebook_file(default_codebook, tmp_path_factory):
    path = tmp_path_factory.mktemp("codebook") / "codebook.txt"
    cbm.save(default_codebook, path)
    return path


# acceptance summary: one PASS/FAIL line per criterion at the end of the run

def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    entry = _criteria.setdefault(n, {"text": text, "ok": True, "seen": False, "notes": []})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        entry["seen"] = True
        if call.excinfo is not None:
            entry["ok"] = False


def pytest_runtest_logreport(report):
    if report.when != "call":
        return  # user properties ride on every phase's report
    for name, value in report.user_properties:
        if name == "criterion_note":
            n, note = value
            _criteria.setdefault(n, {"text": "", "ok": True, "seen": False, "notes": []})["notes"].append(note)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        status = "PASS" if c["ok"] and c["seen"] else ("FAIL" if c["seen"] else "NOT RUN")
        line = f"{status} criterion {n}: {c['text']}"
        if c["notes"]:
            line += " [" + "; ".join(c["notes"]) + "]"
        terminalreporter.write_line(line)
