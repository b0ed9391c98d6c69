"""Small deterministic datasets with independently computed oracle values.

The JSON files next to this module are produced by
``scripts/build_fixtures.py`` in exact rational arithmetic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..core import Sample
from ..errors import UnknownFixture

NAMES = ("cross4", "outlier1d", "six2d", "skew7")


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    sample: Sample
    oracles: dict
    provenance: dict
    extra: dict = field(default_factory=dict)


def load(name: str) -> Fixture:
    if name not in NAMES:
        raise UnknownFixture(f"no fixture named {name!r}")
    doc = json.loads(resources.files(__package__).joinpath(f"{name}.json").read_text())
    oracles = {k: np.asarray(v, dtype=float) for k, v in doc["oracles"].items()}
    extra = {k: v for k, v in doc.items() if k not in ("name", "version", "sample", "oracles", "provenance")}
    return Fixture(doc["name"], Sample(doc["sample"]), oracles, doc["provenance"], extra)


def load_all() -> list[Fixture]:
    return [load(n) for n in NAMES]
