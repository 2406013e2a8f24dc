"""Local output storage."""

from vfl_shield.storage.csv_storage import CSVStorage

__all__ = ["CSVStorage"]
