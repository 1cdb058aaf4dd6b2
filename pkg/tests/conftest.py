from __future__ import annotations

import json
from pathlib import Path

import pytest

from cocreation.catalog import load_catalog

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "cocreation" / "data"
CATALOG_PATH = DATA_DIR / "catalog.json"
SCENARIO_PATH = DATA_DIR / "scenario-xr-live-event.json"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(CATALOG_PATH)


@pytest.fixture()
def catalog_doc():
    """A fresh mutable copy of the reference catalog document."""
    return json.loads(CATALOG_PATH.read_text(encoding="utf-8"))


# the expert four-product bundle at the budget-maximal tiers
EXPERT_BUNDLE_IDS = [
    "po-slice-gold",
    "po-cache-large-gpu",
    "po-observability",
    "po-setup-vpn",
]

EXPERT_BUNDLE_NAMES = [
    "On-demand Network Slice",
    "Edge Media Cache Server",
    "Network Slice Observability",
    "Service Setup and VPN",
]

# 700*7 + 300*7 + 100*7 + 100, in cents
EXPERT_WEEK_TOTAL_CENTS = 780_000
