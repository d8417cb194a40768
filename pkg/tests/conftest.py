from pathlib import Path

import pytest

from maprepair.model import parse_dependencies, parse_instance, parse_schema
from maprepair.safety import Policy

FIXTURES = Path(__file__).parent / "fixtures"


def load_dir(name):
    d = FIXTURES / name
    source = parse_schema((d / "source.schema").read_text())
    out = {"dir": d, "source": source}
    if (d / "views.tgds").exists():
        out["views"] = parse_dependencies((d / "views.tgds").read_text(), source, id_prefix="v")
    if (d / "policy.instance").exists():
        out["vis"] = parse_instance((d / "policy.instance").read_text(), source)
    out["tgds"] = parse_dependencies((d / "mapping.tgds").read_text(), source)
    return out


@pytest.fixture
def running():
    r = load_dir("running")
    r["hidden"] = parse_dependencies((r["dir"] / "mapping_hidden.tgds").read_text(), r["source"])
    r["policy"] = Policy(r["views"], r["source"])
    return r


@pytest.fixture
def example_frepair():
    r = load_dir("frepair")
    r["policy"] = Policy(instance=r["vis"])
    return r


@pytest.fixture
def example_modify():
    r = load_dir("modify_body")
    r["policy"] = Policy(instance=r["vis"])
    return r


def tgd(text, **kw):
    (t,) = parse_dependencies(text, **kw)
    return t


# -- one summary line per acceptance criterion

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for number, (title, tests) in CRITERIA.items():
        outcomes = [_acceptance.get(t) for t in tests]
        if any(o is None for o in outcomes):
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        parts = ", ".join(f"{t}={_acceptance.get(t, 'not run')}" for t in tests)
        terminalreporter.write_line(f"criterion {number:>2}: {status:<7} {title} [{parts}]")
