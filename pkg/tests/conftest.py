"""Shared fixtures: synthetic skill libraries and a miniature kinase PDB."""

from __future__ import annotations

import pytest

from gatewright.skills import HandoffEntry, SkillDocument

CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter) -> None:
    """Echo the per-criterion verdicts even when capture ate the prints."""
    if CRITERION_LINES:
        terminalreporter.section("release criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


def make_skill_text(name: str, tier: str, *, description: str = "does a thing",
                    principles: str = "", tools: str = "", handoff: str = "",
                    extra: str = "", body: str = "Usage notes.\n") -> str:
    lines = ["---", f"name: {name}", f"tier: {tier}",
             f"description: {description}", "license: MIT", "author: curator"]
    if principles:
        lines.append(f"principles: [{principles}]")
    if tools:
        lines.append(f"tools: [{tools}]")
    if handoff:
        lines.append(handoff.rstrip())
    if extra:
        lines.append(extra.rstrip())
    lines.append("---")
    return "\n".join(lines) + "\n" + body


def build_library(n_l1: int = 58, n_l2: int = 11) -> list[SkillDocument]:
    """A well-formed library: one L3, workflows each consuming two tools."""
    docs = [SkillDocument(
        name="methodology-core", tier="L3",
        metadata={"name": "methodology-core", "tier": "L3",
                  "description": "operating principles"},
        body="Principles 1 through 25.\n")]
    for i in range(n_l1):
        tool = f"wrapped_tool_{i:03d}"
        docs.append(SkillDocument(
            name=f"tool-wrap-{i:03d}", tier="L1",
            metadata={"name": f"tool-wrap-{i:03d}", "tier": "L1",
                      "description": f"wraps {tool}"},
            consumed_tools=(tool,),
            body=f"Call {tool} with validated arguments.\n"))
    for j in range(n_l2):
        first = f"wrapped_tool_{(2 * j) % n_l1:03d}"
        second = f"wrapped_tool_{(2 * j + 1) % n_l1:03d}"
        docs.append(SkillDocument(
            name=f"workflow-{j:03d}", tier="L2",
            metadata={"name": f"workflow-{j:03d}", "tier": "L2",
                      "description": "a two-step workflow"},
            referenced_principles=(1 + j % 25, 1 + (j + 4) % 25),
            consumed_tools=(first, second),
            handoff_contract=(HandoffEntry(
                artifact_name="poses.pdbqt", file_format="pdbqt",
                consumers=(f"tool-wrap-{(2 * j) % n_l1:03d}",),
                download_category="A"),),
            body="Run both tools in order.\n"))
    return docs


@pytest.fixture
def library():
    return build_library()


# A tiny two-chain PDB fragment. Chain A mimics a kinase domain deposited
# with author numbering 24 behind the reference sequence (DBREF offset +24).
MINI_PDB = """\
HEADER    TRANSFERASE                             01-JAN-00   1ABC
DBREF  1ABC A  695   845  UNP    P00533   EGFR_HUMAN     719    869
DBREF  1ABC B    1    10  UNP    P99999   OTHER_PROT       1     10
ATOM      1  N   LYS A 721      10.000  10.000  10.000  1.00 20.00           N
ATOM      2  CA  LYS A 721      11.000  10.000  10.000  1.00 20.00           C
ATOM      3  N   THR A 766      12.000  11.000  10.000  1.00 20.00           N
ATOM      4  N   LEU A 768      13.000  12.000  10.000  1.00 20.00           N
ATOM      5  CA  LEU A 768      13.500  12.000  10.000  1.00 20.00           C
ATOM      6  N   MET A 769      14.000  13.000  10.000  1.00 20.00           N
ATOM      7  N  AGLY A 770      15.000  14.000  10.000  0.50 20.00           N
ATOM      8  N  BGLY A 770      15.100  14.000  10.000  0.50 20.00           N
ATOM      9  N   ASP A 831      16.000  15.000  10.000  1.00 20.00           N
ATOM     10  N   GLY A 831A     17.000  16.000  10.000  1.00 20.00           N
ATOM     11  N   ALA B   1      20.000  20.000  20.000  1.00 20.00           N
ATOM     12  N   CYS B   2      21.000  20.000  20.000  1.00 20.00           N
TER
END
"""


@pytest.fixture
def mini_pdb(tmp_path):
    path = tmp_path / "mini.pdb"
    path.write_text(MINI_PDB)
    return path


@pytest.fixture
def mini_pdb_text():
    return MINI_PDB
