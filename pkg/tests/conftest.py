import numpy as np
import pytest

from iccbf_rl.config import Config
from iccbf_rl.dynamics import cruise_model, docking_model, inspection_model
from iccbf_rl.env import BenchmarkEnv, EnvConfig, InspectionEnv


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def models(cfg):
    return {
        "cruise": cruise_model(cfg.cruise),
        "docking": docking_model(cfg.docking),
        "inspection": inspection_model(cfg.inspection),
    }


@pytest.fixture(scope="session")
def cruise_env(cfg):
    return BenchmarkEnv(cfg, EnvConfig("cruise", stage=1))


@pytest.fixture(scope="session")
def docking_env(cfg):
    return BenchmarkEnv(cfg, EnvConfig("docking", stage=1))


@pytest.fixture(scope="session")
def cruise_env2(cfg):
    return BenchmarkEnv(cfg, EnvConfig("cruise", stage=2))


@pytest.fixture(scope="session")
def inspection_env(cfg):
    return InspectionEnv(cfg, EnvConfig("inspection", stage=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _criterion_key(k):
    digits = "".join(c for c in k if c.isdigit())
    return int(digits or 0), k


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE, key=_criterion_key):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
