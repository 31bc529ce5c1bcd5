"""Small hand-built datasets shared by several test modules."""
from erpipe.dataset import Dataset

ATTRS = ["Title", "Manufacturer", "Price"]


def misplaced_maker_fixture():
    """Left title absorbed the manufacturer name; everything else agrees."""
    left = Dataset.from_rows(
        "T",
        ATTRS,
        [
            ["aspyr media inc sims 2 glamour life stuff pack", "aspyr media", "24.99"],
            ["photoshop elements 4", "adobe", "79.99"],
        ],
        ids=["a1", "a2"],
    )
    right = Dataset.from_rows(
        "T'",
        ATTRS,
        [
            ["Photoshop  Elements 4", "Adobe", "79.99"],
            ["sims 2 glamour life stuff pack", "aspyr media", "24.99"],
        ],
        ids=["b1", "b2"],
    )
    return left, right, [("a1", "b2"), ("a2", "b1")]
