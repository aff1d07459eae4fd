from __future__ import annotations

import random
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from lcrbsr.generators import random_bsr, random_lcr
from lcrbsr.model import BsrInstance, LcrInstance, parse_program

DATA = Path(__file__).parent / "data"

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def load(name: str):
    return parse_program((DATA / name).read_text())


@pytest.fixture
def witness_ex() -> LcrInstance:
    return load("worked_witness.json")


@pytest.fixture
def table_ex() -> LcrInstance:
    return load("worked_table.json")


def tiny_lcr(seed: int, L: int = 3, C: int = 3, D: int = 3, **kw) -> LcrInstance:
    """Seeded random instance; sizes are upper bounds."""
    rng = random.Random(seed)
    return random_lcr(
        rng,
        rng.randint(1, L),
        rng.randint(1, C),
        rng.randint(1, D),
        density=rng.choice((1.0, 1.5, 2.0)),
        **kw,
    )


def tiny_bsr(seed: int, t: int = 3, P: int = 3, D: int = 3, s: int = 3) -> BsrInstance:
    rng = random.Random(seed)
    return random_bsr(rng, rng.randint(1, t), rng.randint(1, P), rng.randint(1, D), rng.randint(0, s))
