import numpy as np
import pytest

from erpipe.dataset import Dataset


@pytest.fixture
def sims_dataset():
    """Three products, two sharing the manufacturer value."""
    return Dataset.from_rows(
        "T",
        ["Title", "Manufacturer", "Price"],
        [
            ["sims 2 glamour life stuff pack", "aspyr media", "24.99"],
            ["sims 2 open for business", "aspyr media", "29.99"],
            ["photoshop elements", "adobe", "79.99"],
        ],
        ids=["e1", "e2", "e3"],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
