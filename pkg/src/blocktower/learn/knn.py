"""k-nearest-neighbour fall prediction over pixel or trunk feature vectors."""

from __future__ import annotations

import numpy as np


class EmptyTrainSetError(ValueError):
    pass


def knn_predict(train_features: np.ndarray, train_labels: np.ndarray,
                query_features: np.ndarray, k: int = 10) -> np.ndarray:
    """Fall probability = fraction of the k L2-nearest neighbours that fell.

    Equal distances are broken toward the lower training index.
    """
    train_features = np.asarray(train_features, dtype=np.float64)
    query_features = np.asarray(query_features, dtype=np.float64)
    m = train_features.shape[0]
    if m == 0:
        raise EmptyTrainSetError("no training points")
    if not 1 <= k <= m:
        raise ValueError(f"k={k} must lie in [1, {m}]")
    if train_features.shape[1] != query_features.shape[1]:
        raise ValueError("feature dimensions differ")
    labels = np.asarray(train_labels, dtype=np.float64)

    t_sq = (train_features**2).sum(axis=1)
    probs = np.empty(query_features.shape[0])
    idx = np.arange(m)
    for qi in range(query_features.shape[0]):
        q = query_features[qi]
        d = t_sq - 2.0 * (train_features @ q) + (q**2).sum()
        order = np.lexsort((idx, d))[:k]
        probs[qi] = labels[order].mean()
    return probs
