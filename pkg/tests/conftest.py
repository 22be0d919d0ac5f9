from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from minilake import Config, Lakehouse
from minilake.store import ObjectStore

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def store(tmp_path) -> ObjectStore:
    return ObjectStore(tmp_path / "wh")


@pytest.fixture
def lake(tmp_path) -> Lakehouse:
    lh = Lakehouse(tmp_path / "wh")
    lh.init()
    return lh


@pytest.fixture
def lake_factory(tmp_path):
    """Build extra warehouses (or reopen existing ones) under tmp_path."""

    def build(name: str = "wh", config: Config | None = None, init: bool = True, **kw):
        lh = Lakehouse(tmp_path / name, config=config, **kw)
        if init and not lh.catalog.is_initialized():
            lh.init()
        return lh

    return build
