import numpy as np
import pytest

from layoutdiff.synth import SynthConfig, generate_dataset
from layoutdiff.training import TrainConfig, train

TINY_TRAIN = dict(epochs=1, T=10, channels=8, emb_dim=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(SynthConfig(seed=1, n_samples=40, M=3, H=16, W=16))


@pytest.fixture(scope="session")
def tiny_mdm(tiny_dataset):
    return train(tiny_dataset, "mdm", TrainConfig(seed=1, **TINY_TRAIN))


@pytest.fixture(scope="session")
def tiny_ddpm(tiny_dataset):
    return train(tiny_dataset, "ddpm", TrainConfig(seed=1, **TINY_TRAIN))


_criteria = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    names = [v for k, v in report.user_properties if k == "criterion"]
    if names:
        details = [v for k, v in report.user_properties if k == "detail"]
        _criteria.append((names[0], report.outcome, report.duration, details[0] if details else ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration, detail in sorted(_criteria):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  ({duration:.1f} s)  {detail}")
