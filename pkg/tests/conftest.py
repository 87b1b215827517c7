import json
from pathlib import Path

import pytest

from fsqkd.cli import main as cli_main

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"


@pytest.fixture(scope="session")
def static_run(tmp_path_factory):
    """One full static scenario through the CLI, shared across test modules."""
    root = tmp_path_factory.mktemp("static_run")
    sim = root / "sim"
    rep = root / "rep"
    assert cli_main(["simulate", "--config", str(CONFIGS / "static.ini"), "--out", str(sim)]) == 0
    assert (
        cli_main(
            [
                "distill",
                "--records", str(sim / "records.bin"),
                "--pattern", str(sim / "pattern.bin"),
                "--manifest", str(sim / "manifest.json"),
                "--out", str(rep),
            ]
        )
        == 0
    )
    with open(rep / "report.json", "r", encoding="utf-8") as fh:
        report = json.load(fh)
    return {"sim": sim, "rep": rep, "report": report}


@pytest.fixture(scope="session")
def handheld_run(tmp_path_factory):
    """One hand-held scenario with threshold optimization through the CLI."""
    root = tmp_path_factory.mktemp("handheld_run")
    sim = root / "sim"
    rep = root / "rep"
    assert cli_main(["simulate", "--config", str(CONFIGS / "handheld.ini"), "--out", str(sim)]) == 0
    assert (
        cli_main(
            [
                "distill",
                "--records", str(sim / "records.bin"),
                "--pattern", str(sim / "pattern.bin"),
                "--manifest", str(sim / "manifest.json"),
                "--trace", str(sim / "trace.csv"),
                "--optimize",
                "--out", str(rep),
            ]
        )
        == 0
    )
    with open(rep / "report.json", "r", encoding="utf-8") as fh:
        report = json.load(fh)
    return {"sim": sim, "rep": rep, "report": report}
