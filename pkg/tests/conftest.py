import pytest

from optiforest.core import TrainingSet
from optiforest.transforms import generate_parity_instance


def make_ts(rows, labels, class_order=None) -> TrainingSet:
    return TrainingSet.from_rows(rows, labels, class_order=class_order)


@pytest.fixture
def two_point() -> TrainingSet:
    return make_ts([(0,), (1,)], ["blue", "red"])


@pytest.fixture
def xor_grid() -> TrainingSet:
    return make_ts([(0, 0), (1, 1), (0, 1), (1, 0)], ["b", "b", "r", "r"])


@pytest.fixture
def majority3() -> TrainingSet:
    """The 6-example parity instance for 3 trees of size 1."""
    return generate_parity_instance(3, 1).dataset


@pytest.fixture(scope="session")
def parity33():
    return generate_parity_instance(3, 3)
