import os

import numpy as np
import pytest

from cexdex.kernel import FeeBand, ModelParams, params_from_config, read_config
from cexdex.cli import PRESET_DIR


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the long table reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or os.environ.get("CEXDEX_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; use --runslow or CEXDEX_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def convergence_params(q: float = 0.0) -> tuple[ModelParams, FeeBand]:
    cfg = read_config(PRESET_DIR / "convergence.cfg")
    cfg["q_step"] = q
    return params_from_config(cfg)


@pytest.fixture
def conv_setup():
    return convergence_params


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


# acceptance verdicts, echoed in the terminal summary so they survive output capture
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, passed: bool, detail: str) -> bool:
    line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
