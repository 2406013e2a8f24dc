"""CSV and JSON file storage for experiment outputs."""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from vfl_shield.errors import ContractError


class CSVStorage:
    """Simple utility for saving/loading CSV and JSON files under one directory."""

    def __init__(self, base_path: Union[str, Path] = "."):
        """Initialize CSV storage.

        Args:
            base_path: Base directory for output files.
        """
        self.base_path = Path(base_path)
        self.base_path.mkdir(parents=True, exist_ok=True)

    def _get_path(self, key: str) -> Path:
        """Get full path for a key.

        Args:
            key: Storage key (filename).

        Returns:
            Full path to the file.
        """
        return self.base_path / key

    def save(self, data: Any, key: str) -> Path:
        """Save data to a CSV or JSON file.

        Args:
            data: DataFrame, list of records, or (for ``.json`` keys) any
                JSON-serializable object.
            key: Filename to save to.

        Returns:
            The written path.
        """
        path = self._get_path(key)
        if key.endswith(".json"):
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
        elif isinstance(data, pd.DataFrame):
            data.to_csv(path, index=False)
        elif isinstance(data, list):
            pd.DataFrame(data).to_csv(path, index=False)
        else:
            raise ValueError(f"Unsupported data type: {type(data)}")
        return path

    def load(self, key: str) -> Union[pd.DataFrame, Any]:
        """Load data from a CSV or JSON file.

        Args:
            key: Filename to load from.

        Returns:
            Loaded DataFrame, or the decoded JSON object.
        """
        path = self._get_path(key)
        if key.endswith(".json"):
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        return pd.read_csv(path)

    def exists(self, key: str) -> bool:
        """Check if file exists.

        Args:
            key: Filename to check.

        Returns:
            True if file exists.
        """
        return self._get_path(key).exists()

    def append_rows(
        self,
        rows: List[Dict[str, Any]],
        key: str,
        columns: Optional[Sequence[str]] = None,
    ) -> Path:
        """Append records to a CSV, writing the header only when creating it.

        Existing lines are never rewritten, so appended output is
        byte-stable.

        Args:
            rows: Records to append.
            key: CSV filename.
            columns: Column order; defaults to the first record's keys.

        Raises:
            ContractError: If the existing header differs from ``columns``.
        """
        path = self._get_path(key)
        df = pd.DataFrame(rows, columns=list(columns) if columns else None)
        if path.exists():
            header = pd.read_csv(path, nrows=0).columns.tolist()
            if header != df.columns.tolist():
                raise ContractError(
                    f"{key} has columns {header}, not {df.columns.tolist()}"
                )
            df.to_csv(path, mode="a", header=False, index=False)
        else:
            df.to_csv(path, index=False)
        return path
