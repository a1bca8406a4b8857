import pytest

from subsetforge import build_inverted_index, dataset_frequencies, load_index

F1_TEXT = """\
# fixture F1
{"sample_id": "s1", "counts": {"car": 2}}
{"sample_id": "s2", "counts": {"car": 1, "ped": 1}}
{"sample_id": "s3", "counts": {"ped": 3}}
{"sample_id": "s4", "counts": {"car": 5, "ped": 1}}
"""

CAR, PED = 0, 1
S1, S2, S3, S4 = 0, 1, 2, 3


@pytest.fixture
def f1_text():
    return F1_TEXT


@pytest.fixture(scope="session")
def f1():
    return load_index(F1_TEXT.encode())


@pytest.fixture(scope="session")
def f1_freq(f1):
    return dataset_frequencies(f1)


@pytest.fixture(scope="session")
def f1_inv(f1):
    return build_inverted_index(f1)


@pytest.fixture
def f1_file(tmp_path):
    path = tmp_path / "f1.clsidx"
    path.write_text(F1_TEXT, encoding="utf-8")
    return path


_criteria_lines = []


@pytest.fixture(scope="session")
def criteria_log():
    return _criteria_lines


def pytest_terminal_summary(terminalreporter):
    if _criteria_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criteria_lines:
            terminalreporter.write_line(line)
