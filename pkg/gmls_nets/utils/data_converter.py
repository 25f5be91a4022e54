import hashlib
from typing import Any

import numpy as np
import scipy.sparse as sp


class DataConverter:
    """
    A utility class for converting arrays, sparse matrices and numpy scalars
    to JSON-friendly Python values and back.
    """

    @staticmethod
    def convert_np_num_to_py_num(data):
        """
        Converts numpy numeric types (e.g., np.int64, np.float64) to native Python numeric types.

        Parameters:
        - data (np.integer, np.floating, or other): The numpy numeric value to convert.

        Returns:
        - int or float: The equivalent Python numeric value. If the input is not a numpy type, the original data is returned.
        """
        if isinstance(data, (np.integer, np.floating)):
            return data.item()
        return data

    @staticmethod
    def to_json_value(data: Any) -> Any:
        """
        Recursively converts arrays and numpy scalars inside dicts, lists and tuples.
        """
        if isinstance(data, dict):
            return {str(k): DataConverter.to_json_value(v) for k, v in data.items()}
        if isinstance(data, (list, tuple)):
            return [DataConverter.to_json_value(v) for v in data]
        if isinstance(data, np.ndarray):
            return data.tolist()
        return DataConverter.convert_np_num_to_py_num(data)

    @staticmethod
    def sparse_to_dict(matrix: sp.spmatrix) -> dict:
        """
        Serializes a sparse matrix in CSR form.

        Parameters
        ----------
        matrix : scipy.sparse.spmatrix
            Any sparse matrix.

        Returns
        -------
        dict
            `shape`, `data`, `indices` and `indptr` as lists.
        """
        csr = sp.csr_matrix(matrix)
        return {
            "shape": list(csr.shape),
            "data": csr.data.tolist(),
            "indices": csr.indices.tolist(),
            "indptr": csr.indptr.tolist(),
        }

    @staticmethod
    def sparse_from_dict(data: dict) -> sp.csr_matrix:
        return sp.csr_matrix(
            (
                np.asarray(data["data"], dtype=float),
                np.asarray(data["indices"], dtype=np.int64),
                np.asarray(data["indptr"], dtype=np.int64),
            ),
            shape=tuple(data["shape"]),
        )

    @staticmethod
    def array_fingerprint(*arrays: np.ndarray) -> str:
        """
        SHA-1 of the raw bytes of the given arrays, used as geometry provenance.
        """
        digest = hashlib.sha1()
        for array in arrays:
            array = np.ascontiguousarray(array)
            digest.update(str(array.shape).encode())
            digest.update(array.tobytes())
        return digest.hexdigest()
