"""Rank statistics: Kendall tau, feature-correlation matrices and cluster agreement."""

import logging
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from hypoquant.domain.entities import (
    CLUSTER_ORDER,
    AccuracyResult,
    ClusterLabel,
    Clustering,
    CorrMatrix,
    RankOrientation,
    Ranking,
)
from hypoquant.domain.exceptions import DataError
from hypoquant.workers.pool import map_ordered

logger = logging.getLogger(__name__)

RankLike = Union[Ranking, Sequence[str]]
FeatureSet = Mapping[str, np.ndarray]

TWO_CLUSTERS: Tuple[ClusterLabel, ...] = (ClusterLabel.LIGHT, ClusterLabel.DARK)

GRAY = 128


class RankCorrelationError(DataError):
    """Rankings or feature sets cannot be compared."""


class ClusteringError(DataError):
    """Cluster sizes or vocabularies do not fit."""


def _ids(ranking: RankLike) -> List[str]:
    return list(ranking.ordered_ids if isinstance(ranking, Ranking) else ranking)


def kendall_counts(rank_a: RankLike, rank_b: RankLike) -> Tuple[int, int]:
    """Concordant (P) and discordant (Q) pair counts.

    B is first aligned to A's order; for every position the later entries
    ranked higher in B count towards P, lower ones towards Q.
    """
    ids_a, ids_b = _ids(rank_a), _ids(rank_b)
    if len(ids_a) != len(ids_b) or set(ids_a) != set(ids_b):
        raise RankCorrelationError("rankings cover different id sets")
    if len(set(ids_a)) != len(ids_a):
        raise RankCorrelationError("rankings must not contain ties or duplicates")
    position_b = {sid: i for i, sid in enumerate(ids_b)}
    aligned = np.array([position_b[sid] for sid in ids_a], dtype=np.int64)
    later = np.triu(np.ones((len(aligned), len(aligned)), dtype=bool), k=1)
    higher = aligned[np.newaxis, :] > aligned[:, np.newaxis]
    concordant = int(np.count_nonzero(higher & later))
    discordant = int(np.count_nonzero(later)) - concordant
    return concordant, discordant


def kendall_tau_exact(rank_a: RankLike, rank_b: RankLike) -> Fraction:
    """Kendall tau as an exact rational: (P - Q) / (N (N - 1) / 2)."""
    concordant, discordant = kendall_counts(rank_a, rank_b)
    n = len(_ids(rank_a))
    if n < 2:
        raise RankCorrelationError("Kendall tau needs at least two items")
    return Fraction(concordant - discordant, n * (n - 1) // 2)


def kendall_tau(rank_a: RankLike, rank_b: RankLike) -> float:
    return float(kendall_tau_exact(rank_a, rank_b))


def _as_matrix(values: np.ndarray, count: int, name: str = "") -> np.ndarray:
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    if matrix.ndim != 2 or matrix.shape[0] != count:
        raise RankCorrelationError(
            f"feature {name!r} has shape {matrix.shape}, expected {count} rows"
        )
    return matrix


def feature_matrix(ids: Sequence[str], feature_values: Mapping[str, Sequence[float]]) -> np.ndarray:
    """Stack per-subject feature vectors in dataset order."""
    rows = [np.atleast_1d(np.asarray(feature_values[sid], dtype=np.float64)) for sid in ids]
    widths = {row.shape for row in rows}
    if len(widths) > 1:
        raise RankCorrelationError(f"feature vectors differ in dimension: {sorted(widths)}")
    return np.vstack(rows)


def feature_rankings(
    ids: Sequence[str], features: Union[np.ndarray, Mapping[str, Sequence[float]]]
) -> List[List[str]]:
    """For each query subject, the other subjects by ascending feature distance.

    Distance is Euclidean (absolute difference for scalars); ties keep
    dataset order.
    """
    if isinstance(features, Mapping):
        matrix = feature_matrix(ids, features)
    else:
        matrix = _as_matrix(features, len(ids))
    rankings: List[List[str]] = []
    for query in range(len(ids)):
        distances = np.linalg.norm(matrix - matrix[query], axis=1)
        order = [i for i in np.argsort(distances, kind="stable") if i != query]
        rankings.append([ids[i] for i in order])
    return rankings


def value_ranking(ids: Sequence[str], values: Sequence[float]) -> Ranking:
    """Ids by ascending value, ties in dataset order."""
    order = np.argsort(np.asarray(values, dtype=np.float64), kind="stable")
    return Ranking(ordered_ids=[ids[i] for i in order])


def _is_constant(matrix: np.ndarray) -> bool:
    return bool(np.all(matrix == matrix[0]))


def correlation_matrix(
    ids: Sequence[str],
    features_a: FeatureSet,
    features_b: FeatureSet,
    orientation: RankOrientation = RankOrientation.QUERY,
    workers: int = 1,
) -> CorrMatrix:
    """Averaged Kendall tau between every feature of A and every feature of B.

    QUERY orientation ranks subjects by distance to each query subject and
    averages tau over all queries. VALUE orientation ranks all subjects once
    by ascending scalar value.

    Args:
        ids: Subject ids, the row order of every feature array
        features_a: Named features, each a vector or an (N, d) matrix
        features_b: Named features compared against `features_a`
        orientation: How subject rankings are formed from each feature
        workers: Threads for the per-entry tau computations

    Returns:
        CorrMatrix of shape (len(A), len(B)). Entries involving a feature
        that is constant across subjects are NaN and listed in ``flagged``.
    """
    n = len(ids)
    if n < 3:
        raise RankCorrelationError(f"correlation needs at least 3 subjects, got {n}")

    def prepare(features: FeatureSet) -> Tuple[List[Optional[List[List[str]]]], List[bool]]:
        rankings: List[Optional[List[List[str]]]] = []
        constant: List[bool] = []
        for name, values in features.items():
            matrix = _as_matrix(values, n, name)
            constant.append(_is_constant(matrix))
            if orientation == RankOrientation.VALUE:
                if matrix.shape[1] != 1:
                    raise RankCorrelationError(
                        f"value orientation needs scalar features; {name!r} has "
                        f"{matrix.shape[1]} dimensions"
                    )
                rankings.append([value_ranking(ids, matrix[:, 0]).ordered_ids])
            else:
                rankings.append(feature_rankings(ids, matrix))
        return rankings, constant

    rankings_a, constant_a = prepare(features_a)
    rankings_b, constant_b = prepare(features_b)

    cells = [(i, j) for i in range(len(rankings_a)) for j in range(len(rankings_b))]

    def cell_value(cell: Tuple[int, int]) -> float:
        i, j = cell
        if constant_a[i] or constant_b[j]:
            return float("nan")
        per_query_a, per_query_b = rankings_a[i], rankings_b[j]
        assert per_query_a is not None and per_query_b is not None
        total = sum(
            (kendall_tau_exact(ra, rb) for ra, rb in zip(per_query_a, per_query_b)),
            Fraction(0),
        )
        return float(total / len(per_query_a))

    values = np.array(map_ordered(cell_value, cells, workers), dtype=np.float64).reshape(
        len(rankings_a), len(rankings_b)
    )
    flagged = [cell for cell in cells if np.isnan(values[cell])]
    row_labels, col_labels = list(features_a), list(features_b)
    for i, j in flagged:
        logger.warning(
            f"Constant feature in pair ({row_labels[i]}, {col_labels[j]}); entry left undefined"
        )
    return CorrMatrix(
        row_labels=row_labels, col_labels=col_labels, values=values, flagged=flagged
    )


def _labels_for(count: int) -> Tuple[ClusterLabel, ...]:
    if count == 3:
        return CLUSTER_ORDER
    if count == 2:
        return TWO_CLUSTERS
    raise ClusteringError(f"expected 2 or 3 cluster sizes, got {count}")


def rank_to_clusters(
    ranking: RankLike, sizes: Union[Sequence[int], Mapping[ClusterLabel, int]]
) -> Clustering:
    """Cut a light-to-dark ranking into consecutive clusters of the given sizes.

    Three sizes mean (light, mid, dark); two mean (light, dark).
    """
    ids = _ids(ranking)
    if isinstance(sizes, Mapping):
        labels = tuple(label for label in CLUSTER_ORDER if label in sizes)
        counts = [sizes[label] for label in labels]
        _labels_for(len(labels))
    else:
        counts = list(sizes)
        labels = _labels_for(len(counts))
    if any(c < 0 for c in counts) or sum(counts) != len(ids):
        raise ClusteringError(f"cluster sizes {counts} do not sum to {len(ids)} subjects")
    assignment: Dict[str, ClusterLabel] = {}
    start = 0
    for label, count in zip(labels, counts):
        for sid in ids[start : start + count]:
            assignment[sid] = label
        start += count
    return Clustering(assignment=assignment)


def accuracy(predicted: Clustering, truth: Clustering) -> AccuracyResult:
    """Mean over ground-truth clusters of |predicted_c & truth_c| / |truth_c|."""
    if set(predicted.assignment) != set(truth.assignment):
        raise ClusteringError("predicted and ground-truth clusterings cover different ids")
    labels = truth.labels
    if not set(predicted.labels) <= set(labels):
        raise ClusteringError(
            f"cluster vocabularies differ: {[label.value for label in predicted.labels]} vs "
            f"{[label.value for label in labels]}"
        )
    common = {
        label: sum(1 for sid in truth.members(label) if predicted.assignment[sid] == label)
        for label in labels
    }
    sizes = truth.sizes()
    return AccuracyResult(
        labels=labels,
        common=common,
        truth_sizes=sizes,
        accuracy=accuracy_from_counts(
            [common[label] for label in labels], [sizes[label] for label in labels]
        ),
    )


def accuracy_from_counts(common: Sequence[int], sizes: Sequence[int]) -> float:
    """Mean overlap ratio from per-cluster overlaps and ground-truth cluster sizes."""
    if len(common) != len(sizes) or not sizes or any(s <= 0 for s in sizes):
        raise ClusteringError("need one positive ground-truth size per cluster")
    return float(sum(Fraction(c, s) for c, s in zip(common, sizes)) / len(sizes))


def split_at_largest_gap(ratios: Mapping[str, float]) -> Clustering:
    """Two-cluster ground truth: cut sorted ratios at the largest increase."""
    ids = list(ratios)
    if len(ids) < 2:
        raise ClusteringError("need at least two subjects to split")
    ranking = value_ranking(ids, [ratios[sid] for sid in ids])
    ordered = np.array([ratios[sid] for sid in ranking.ordered_ids], dtype=np.float64)
    gaps = np.diff(ordered)
    if not np.any(gaps > 0):
        raise ClusteringError("all ratios are equal; no gap to split at")
    cut = int(np.argmax(gaps)) + 1
    logger.info(f"Largest ratio gap {gaps[cut - 1]:.6g} splits {cut} light / {len(ids) - cut} dark")
    return rank_to_clusters(ranking, [cut, len(ids) - cut])


def render_heatmap(values: np.ndarray, cell: int) -> np.ndarray:
    """RGB heat map: blue (-1) to white (0) to red (+1); NaN cells are mid gray."""
    matrix = np.asarray(values, dtype=np.float64)
    t = np.clip(np.nan_to_num(matrix, nan=0.0), -1.0, 1.0)
    red = np.where(t < 0, 255.0 * (1.0 + t), 255.0)
    green = np.where(t < 0, 255.0 * (1.0 + t), 255.0 * (1.0 - t))
    blue = np.where(t < 0, 255.0, 255.0 * (1.0 - t))
    rgb = np.rint(np.stack([red, green, blue], axis=-1)).astype(np.uint8)
    rgb[np.isnan(matrix)] = GRAY
    return np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)
