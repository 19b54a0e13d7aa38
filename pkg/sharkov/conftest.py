import numpy as np
import pytest

from sharkov.pl_map import PiecewiseLinearMap, identity, tent

TENT_MAP_TEXT = "domain 0 1\nnodes 0 0.5 1\nvalues 0 1 0\n"


@pytest.fixture(autouse=True)
def _bounded_workers(monkeypatch):
    monkeypatch.setenv("SHARKOV_THREADS", "2")


@pytest.fixture
def tent_map() -> PiecewiseLinearMap:
    return tent()


@pytest.fixture
def identity_map() -> PiecewiseLinearMap:
    return identity()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tent_file(tmp_path):
    path = tmp_path / "tent.map"
    path.write_text(TENT_MAP_TEXT, encoding="utf-8")
    return path
