"""Frozen counter blocks of the shipped configs.

Each golden file was written from a run whose report passed every
verification, including agreement with the direct linearization oracle.
"""
import json

import pytest

from conftest import ROOT, run_config

GOLDEN = ROOT / "tests" / "golden"


@pytest.mark.parametrize("name", sorted(p.stem for p in GOLDEN.glob("*.json")))
def test_counters_match_golden(name):
    report, _ = run_config(name)
    assert report["pass"]
    assert report["counters"] == json.loads((GOLDEN / f"{name}.json").read_text())
