import numpy as np
import pytest

from perftwin.domain import WorkloadSpec
from perftwin.sobol import parameter_space, plan_workloads
from perftwin.validation import OracleConfig, generate_oracle_dataset


def cache_spec(**kw):
    base = dict(load_type="random", io_type="read", read_fraction=64.0, block_size=32, n_jobs=4, queue_depth=8)
    base.update(kw)
    return WorkloadSpec(**base)


def pool_spec(**kw):
    base = dict(load_type="random", io_type="read", read_fraction=50.0, block_size=16, n_jobs=4, queue_depth=8,
                raid_k=4, raid_m=2, n_disks=12)
    base.update(kw)
    return WorkloadSpec(**base)


@pytest.fixture(scope="session")
def small_oracle():
    """60 cache loads with 40 points per group; cheap enough for unit tests."""
    plan = plan_workloads(parameter_space("cache_random"), 60)
    return generate_oracle_dataset(plan, OracleConfig(), 40)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(criterion: int, label: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE[(criterion, label)] = ("PASS" if ok else "FAIL", detail)
    return ok


def record_skip(criterion: int, label: str, why: str) -> None:
    ACCEPTANCE[(criterion, label)] = ("SKIP", why)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (criterion, label), (status, detail) in sorted(ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {criterion} [{status}] {label}: {detail}")
