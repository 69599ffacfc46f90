from __future__ import annotations

from pathlib import Path

import pytest

from fogmesh.app_model import Application, CompositeService, DataFlow, DataPath, Microservice, QoSRequirement
from fogmesh.fabric import GB, reference_topology

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
GOLDEN = Path(__file__).resolve().parent / "golden"


def ms(ms_id: str, cpu: float = 0.5, mem: int = GB // 2, thr: float = 10.0, pt: float = 10.0) -> Microservice:
    return Microservice(ms_id, cpu, mem, thr, pt, f"img/{ms_id}")


def chain_app(app_id: str = "chain", n: int = 3, cpu: float = 0.5, mem: int = GB // 2, thr: float = 10.0,
              demand: float = 10.0, pt: float = 10.0) -> Application:
    names = [f"m{i}" for i in range(1, n + 1)]
    flows = tuple(DataFlow(a, b, 1000, True) for a, b in zip(names, names[1:]))
    path = DataPath(tuple((a, b) for a, b in zip(names, names[1:])))
    svc = CompositeService("s", frozenset(names), (path,) if n > 1 else (), QoSRequirement(200.0, demand))
    return Application(app_id, {m: ms(m, cpu, mem, thr, pt) for m in names}, flows, (svc,))


@pytest.fixture
def topo():
    return reference_topology()


# acceptance verdicts, printed together at the end of the run

ACCEPTANCE_CRITERIA = range(1, 10)
_verdicts: dict[int, str] = {}
_selected = pytest.StashKey[bool]()


@pytest.fixture
def verdict():
    def record(n: int, ok: bool, detail: str) -> bool:
        _verdicts[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        return ok

    return record


def pytest_collection_modifyitems(session, config, items):
    config.stash[_selected] = any(i.module.__name__.endswith("test_acceptance") for i in items)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config.stash.get(_selected, False):
        return
    terminalreporter.section("acceptance criteria")
    for n in ACCEPTANCE_CRITERIA:
        terminalreporter.write_line(_verdicts.get(n, f"FAIL criterion {n}: did not complete"))
