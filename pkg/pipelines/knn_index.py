import logging
from typing import Optional, Tuple
import numpy as np
from scipy.spatial.distance import cdist

from config.mcce_consts import K_NEIGHBORS, KNN_CHUNK_SIZE
from tabular.dataset import Dataset

logger = logging.getLogger(__name__)

# INVARIANT:
# Row i in features_matrix is training row i of the dataset the index was built
# from. Neighbor indices returned by search refer to that order.


class KnnIndex:
    """Exact k-nearest-neighbor search over the normalized training rows."""

    def __init__(self, ds: Dataset, k: int = K_NEIGHBORS):
        if k < 1:
            raise ValueError(f"k must be at least 1, got {k}")
        if k > ds.n_rows:
            raise ValueError(f"k ({k}) cannot exceed the number of training rows ({ds.n_rows}).")
        self.ds = ds
        self.k = k
        self.features_matrix = ds.normalized_values()
        logger.debug("KnnIndex ready: %d rows, %d encoded columns, k=%d", *self.features_matrix.shape, k)

    # ==========================================
    # STATIC MATH FUNCTIONS
    # ==========================================

    @staticmethod
    def _calculate_distances(candidates_matrix: np.ndarray, target_matrix: np.ndarray) -> np.ndarray:
        """
        Core Algorithm: Euclidean distance between every query row and every training row.
        Math: sqrt( Sum( (candidate_i - target_i)^2 ) )
        Returns: (n_queries, n_train) array (lower = closer).
        """
        return cdist(candidates_matrix, target_matrix, metric="euclidean")

    # ==========================================
    # INSTANCE METHODS
    # ==========================================

    def search(self, rows: np.ndarray, k: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest training rows for each query row (raw coded cells).

        Returns:
            (indices, distances), both (n_queries, k), closest first. Ties at
            equal distance are broken by the smaller training row index.
        """
        k = self.k if k is None else k
        if k > self.features_matrix.shape[0]:
            raise ValueError(f"k ({k}) cannot exceed the number of training rows ({self.features_matrix.shape[0]}).")
        queries = self.ds.normalize_matrix(rows)
        indices = np.empty((queries.shape[0], k), dtype=np.int64)
        distances = np.empty((queries.shape[0], k))

        for start in range(0, queries.shape[0], KNN_CHUNK_SIZE):
            block = queries[start:start + KNN_CHUNK_SIZE]
            scores = self._calculate_distances(block, self.features_matrix)
            # stable sort keeps index order among equal distances
            top = np.argsort(scores, axis=1, kind="stable")[:, :k]
            indices[start:start + KNN_CHUNK_SIZE] = top
            distances[start:start + KNN_CHUNK_SIZE] = np.take_along_axis(scores, top, axis=1)
        return indices, distances
