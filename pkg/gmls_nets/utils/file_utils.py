import hashlib
import json
import os
import re
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from gmls_nets.utils.constants import CSV_FLOAT_FORMAT
from gmls_nets.utils.data_converter import DataConverter


class FileUtils:
    """
    A utility class providing the file helpers shared by every artifact writer:
    JSON documents, headed CSV tables, content hashes and output directories.

    All writers are deterministic: identical inputs produce byte-identical files.
    """

    @staticmethod
    def ensure_dir(path: str) -> str:
        """
        Creates a directory (and parents) if it does not exist.

        Parameters:
        - path (str): Directory path.

        Returns:
        - str: The same path.
        """
        os.makedirs(path, exist_ok=True)
        return path

    @staticmethod
    def write_json(path: str, data: Dict[str, Any]) -> str:
        """
        Writes a JSON document with sorted keys and round-trip float precision.

        Parameters
        ----------
        path : str
            Destination file.
        data : Dict[str, Any]
            Document; numpy arrays and scalars are converted.

        Returns
        -------
        str
            The destination path.
        """
        directory = os.path.dirname(path)
        if directory:
            FileUtils.ensure_dir(directory)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(DataConverter.to_json_value(data), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @staticmethod
    def read_json(path: str) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def write_csv(path: str, header: Sequence[str], rows: np.ndarray) -> str:
        """
        Writes a numeric table with a header row.

        Parameters
        ----------
        path : str
            Destination file.
        header : Sequence[str]
            Column names.
        rows : np.ndarray
            2D array with one column per header entry (1D arrays are one column).

        Returns
        -------
        str
            The destination path.
        """
        rows = np.asarray(rows, dtype=float)
        if rows.ndim == 1:
            rows = rows[:, None]
        if rows.shape[1] != len(header):
            raise ValueError(
                f"CSV {path}: {len(header)} header columns for {rows.shape[1]} data columns"
            )
        directory = os.path.dirname(path)
        if directory:
            FileUtils.ensure_dir(directory)
        np.savetxt(
            path,
            rows,
            delimiter=",",
            header=",".join(header),
            comments="",
            fmt=CSV_FLOAT_FORMAT,
        )
        return path

    @staticmethod
    def read_csv(path: str) -> Tuple[List[str], np.ndarray]:
        """
        Reads a headed numeric CSV written by `write_csv`.

        Returns
        -------
        Tuple[List[str], np.ndarray]
            Column names and a 2D float array.
        """
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip()
        if not header or re.match(r"^[-+0-9.eE,\s]+$", header):
            raise ValueError(f"CSV {path} has no header row")
        columns = [c.strip() for c in header.split(",")]
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
        if rows.size == 0:
            rows = np.zeros((0, len(columns)))
        return columns, rows

    @staticmethod
    def sha256(path: str) -> str:
        digest = hashlib.sha256()
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def clean_filename(filename: str) -> str:
        """
        Clean the given filename by removing any characters that are not letters,
        numbers, underscores or dashes.

        Parameters
        ----------
        filename : str
            The original filename that needs to be cleaned.

        Returns
        -------
        str
            The cleaned filename.
        """
        filename = filename.replace(" ", "_")
        return re.sub(r"[^a-zA-Z0-9_\-]", "", filename)
