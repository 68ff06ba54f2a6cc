import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from perfxplain.logmodel import ExecutionLog, ExecutionRecord, FeatureSchema  # noqa: E402
from perfxplain.synthlog import WorkloadSpec, generate_job_log  # noqa: E402

QUERY_LAST_TASK_FASTER = """FOR T1, T2
  DESPITE jobID_isSame = T ^
  inputsize_compare = SIM ^
  hostname_isSame = T
  OBSERVED duration_compare = LT
  EXPECTED duration_compare = SIM
"""

QUERY_SLOWER_SAME_INSTANCES = """FOR J1, J2
  DESPITE numinstances_isSame = T ^
  pig_script_isSame = T
  OBSERVED duration_compare = GT
  EXPECTED duration_compare = SIM
"""


@pytest.fixture
def small_schema():
    return (
        FeatureSchema("numinstances", "numeric"),
        FeatureSchema("pigscript", "nominal", ("simple-filter.pig", "simple-groupby.pig")),
        FeatureSchema("iosortfactor", "numeric"),
        FeatureSchema("duration", "numeric", role="outcome"),
    )


@pytest.fixture
def small_log(small_schema):
    recs = (
        ExecutionRecord("j1", {"numinstances": 4.0, "pigscript": "simple-filter.pig",
                               "iosortfactor": 10.0, "duration": 100.0}),
        ExecutionRecord("j2", {"numinstances": 4.0, "pigscript": "simple-groupby.pig",
                               "iosortfactor": 50.0, "duration": 300.0}),
        ExecutionRecord("j3", {"numinstances": 8.0, "pigscript": "simple-filter.pig",
                               "iosortfactor": None, "duration": 104.0}),
    )
    return ExecutionLog(small_schema, recs)


@pytest.fixture(scope="session")
def planted_log():
    return generate_job_log(WorkloadSpec(noise=0.05, rng_seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report -------------------------------------------------------------

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts if d)
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
