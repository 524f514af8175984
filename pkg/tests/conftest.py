from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from cbrtwin.casebase import parse_case_base
from cbrtwin.config import load_config
from cbrtwin.domain import parse_domain_model
from cbrtwin.similarity import parse_similarity_spec

DATA = Path(__file__).resolve().parents[1] / "src" / "cbrtwin" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"


def read(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def domain():
    return parse_domain_model(read("injection.dm"), "injection.dm")


@pytest.fixture
def casebase(domain):
    return parse_case_base(read("injection.cb"), [domain], "injection.cb")


@pytest.fixture(scope="session")
def spec(domain):
    return parse_similarity_spec(read("injection.cs"), [domain], "injection.cs")


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    """A scratch copy of the bundled models; the working directory is moved there."""
    for name in ("injection.dm", "injection.cb", "injection.cs", "cases20.cb", "twin.cfg"):
        shutil.copy(DATA / name, tmp_path / name)
    shutil.copytree(DATA / "kb", tmp_path / "kb")
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(directory: Path, *, casebase: str = "injection.cb", sim: dict | None = None,
                 constants: dict | None = None, write: bool = True, clock: str = "virtual",
                 port: str = "sim", replay: str | None = None, extra: str = "") -> Path:
    """Twin config over the scratch models; noise-free unless constants say otherwise."""
    sim_lines = "\n".join(f"{k} = {v}" for k, v in (sim or {}).items())
    const = {"noise": 0.0, **(constants or {})}
    const_lines = "\n".join(f"{k} = {v}" for k, v in const.items())
    text = f"""[models]
domain = injection.dm
casebase = {casebase}
similarity = injection.cs
knowledge_base = kb

[port]
kind = {port}
write = {'true' if write else 'false'}
{'replay = ' + replay if replay else ''}

[sim]
{sim_lines}

[sim.constants]
{const_lines}

[logs]
dir = out
casebase = persisted.cb
clock = {clock}
{extra}
"""
    path = directory / "twin-test.cfg"
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def make_config(workdir):
    def make(**kwargs):
        return load_config(write_config(workdir, **kwargs))
    return make


# -- acceptance verdicts -----------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, title = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict} {title}")
