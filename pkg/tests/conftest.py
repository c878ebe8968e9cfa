import pytest

from harnn.schema import load_dataset
from harnn.synth import SynthSpec, generate_synthetic

SMALL = dict(n_users=40, n_items=30, n_topics=3, min_len=5, max_len=12)


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory):
    return generate_synthetic(SynthSpec(seed=3, **SMALL), str(tmp_path_factory.mktemp("small")))


@pytest.fixture(scope="session")
def small_ds(small_dir):
    return load_dataset(small_dir)


def pytest_terminal_summary(terminalreporter):
    from criteria import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
