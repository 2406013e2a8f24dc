"""Tests for storage backends."""

import pandas as pd
import pytest

from vfl_shield.errors import ContractError
from vfl_shield.storage.csv_storage import CSVStorage


class TestCSVStorage:
    """Tests for CSVStorage backend."""

    @pytest.fixture
    def storage(self, tmp_path):
        """Create a CSVStorage instance with temp directory."""
        return CSVStorage(base_path=str(tmp_path))

    def test_storage_initialization(self, storage, tmp_path):
        """Test storage initialization."""
        assert storage.base_path == tmp_path
        assert tmp_path.exists()

    def test_creates_missing_directory(self, tmp_path):
        """Test nested output directories are created."""
        storage = CSVStorage(tmp_path / "runs" / "a")
        assert storage.base_path.is_dir()

    def test_save_and_load_dataframe(self, storage):
        """Test saving and loading a DataFrame."""
        df = pd.DataFrame({"epoch": [1, 2], "main_accuracy": [0.5, 0.75]})

        storage.save(df, "metrics.csv")
        loaded_df = storage.load("metrics.csv")

        pd.testing.assert_frame_equal(df, loaded_df)

    def test_save_and_load_json(self, storage):
        """Test saving and loading a manifest."""
        manifest = {"runs": [{"seed": 0, "config_hash": "abc"}], "grid": {"x": [1, 2]}}

        storage.save(manifest, "manifest.json")

        assert storage.load("manifest.json") == manifest

    def test_exists(self, storage):
        """Test checking if file exists."""
        storage.save(pd.DataFrame({"col": [1, 2]}), "exists.csv")

        assert storage.exists("exists.csv")
        assert not storage.exists("nonexistent.csv")

    def test_append_rows(self, storage):
        """Test appending records writes the header once."""
        storage.append_rows([{"a": 1, "b": 2}], "rows.csv", ["a", "b"])
        rows = [{"a": 3, "b": 4}, {"a": 5, "b": 6}]
        storage.append_rows(rows, "rows.csv", ["a", "b"])

        loaded_df = storage.load("rows.csv")
        assert loaded_df["a"].tolist() == [1, 3, 5]
        text = (storage.base_path / "rows.csv").read_text()
        assert text.count("a,b") == 1

    def test_append_rows_header_mismatch(self, storage):
        """Test appending with different columns is refused."""
        storage.append_rows([{"a": 1}], "rows.csv", ["a"])
        with pytest.raises(ContractError, match="columns"):
            storage.append_rows([{"b": 1}], "rows.csv", ["b"])

    def test_save_unsupported_type(self, storage):
        """Test that saving unsupported type raises error."""
        with pytest.raises(ValueError, match="Unsupported data type"):
            storage.save("string data", "test.csv")
