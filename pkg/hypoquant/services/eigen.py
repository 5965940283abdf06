"""PCA core and the nonbinary eigenspace-distance descriptor."""

import logging
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from hypoquant.config import settings
from hypoquant.domain.entities import (
    Clustering,
    EigenModel,
    HypoLoadResult,
    NonbinaryResult,
    Projection,
    Ranking,
    RoiVector,
)
from hypoquant.domain.exceptions import DataError
from hypoquant.services.stats import accuracy, rank_to_clusters

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
SPECTRUM_FLOOR = 1e-10
FRACTION_SLACK = 1e-12


class EigenError(DataError):
    """Base exception for PCA errors."""


class NotSymmetricError(EigenError):
    """Matrix handed to the symmetric solver is not symmetric."""


class DegenerateModelError(EigenError):
    """All training rows coincide; there is no eigenspace to rank in."""


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude component is positive."""
    oriented = vectors.copy()
    for i in range(oriented.shape[1]):
        pivot = int(np.argmax(np.abs(oriented[:, i])))
        if oriented[pivot, i] < 0:
            oriented[:, i] = -oriented[:, i]
    return oriented


def round_robin_pairs(n: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint (p, q) index pairs, p < q, covering every pair once.

    Circle schedule: index 0 stays fixed, the others rotate one place per
    round. Odd sizes get a bye slot that is dropped from each round.
    """
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [
            (min(players[i], players[m - 1 - i]), max(players[i], players[m - 1 - i]))
            for i in range(m // 2)
            if players[i] >= 0 and players[m - 1 - i] >= 0
        ]
        if pairs:
            rounds.append((
                np.array([p for p, _ in pairs], dtype=np.intp),
                np.array([q for _, q in pairs], dtype=np.intp),
            ))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


class JacobiEigenSolver:
    """Jacobi rotations for real symmetric matrices.

    Each sweep visits every off-diagonal pair once, in rounds of disjoint
    pairs. Rotations within a round act on separate planes, so a round is
    applied to whole rows and columns at once.
    """

    def __init__(self, max_sweeps: Optional[int] = None, tolerance: Optional[float] = None):
        self.max_sweeps = max_sweeps or settings.jacobi_max_sweeps
        self.tolerance = tolerance or settings.jacobi_tolerance
        self.logger = logging.getLogger("services.eigen")

    def solve(self, matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (descending) and orthonormal eigenvectors as columns."""
        a = np.array(matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise EigenError(f"expected a square matrix, got shape {a.shape}")
        n = a.shape[0]
        norm = float(np.linalg.norm(a))
        asymmetry = float(np.max(np.abs(a - a.T))) if n else 0.0
        if asymmetry > SYMMETRY_TOLERANCE * max(1.0, norm):
            raise NotSymmetricError(f"matrix asymmetry {asymmetry:.3g} exceeds tolerance")
        a = (a + a.T) / 2
        v = np.eye(n)

        upper = np.triu_indices(n, k=1)
        rounds = round_robin_pairs(n) if n >= 2 else []
        converged = n < 2 or norm == 0.0
        sweep = 0
        off = 0.0
        while not converged and sweep < self.max_sweeps:
            off = float(np.abs(a[upper]).max())
            if off < self.tolerance * norm:
                converged = True
                break
            # entries already below the target are left alone this sweep
            skip_below = self.tolerance * norm / n
            for p, q in rounds:
                self._rotate_round(a, v, p, q, skip_below)
            sweep += 1
        if not converged:
            off = float(np.abs(a[upper]).max())
            converged = off < self.tolerance * norm
            if not converged:
                self.logger.warning(
                    f"Jacobi stopped after {sweep} sweeps with off-diagonal {off:.3g}"
                )

        values = np.diag(a).copy()
        order = np.argsort(-values, kind="stable")
        return values[order], _orient(v[:, order])

    @staticmethod
    def _rotate_round(
        a: np.ndarray, v: np.ndarray, p: np.ndarray, q: np.ndarray, skip_below: float
    ) -> None:
        apq = a[p, q]
        active = np.abs(apq) > skip_below
        if not active.any():
            return
        p, q, apq = p[active], q[active], apq[active]
        theta = (a[q, q] - a[p, p]) / (2.0 * apq)
        sign = np.where(theta >= 0, 1.0, -1.0)
        t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
        c = 1.0 / np.sqrt(t * t + 1.0)
        s = t * c

        col_p, col_q = a[:, p], a[:, q]
        a[:, p] = c * col_p - s * col_q
        a[:, q] = s * col_p + c * col_q
        row_p, row_q = a[p, :], a[q, :]
        a[p, :] = c[:, None] * row_p - s[:, None] * row_q
        a[q, :] = s[:, None] * row_p + c[:, None] * row_q
        a[p, q] = 0.0
        a[q, p] = 0.0

        vec_p, vec_q = v[:, p], v[:, q]
        v[:, p] = c * vec_p - s * vec_q
        v[:, q] = s * vec_p + c * vec_q


def eigensolve_symmetric(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return JacobiEigenSolver().solve(matrix)


def select_components(eigenvalues: Sequence[float], fraction: float = 0.70) -> int:
    """Smallest n whose leading eigenvalues hold at least `fraction` of the total."""
    if not 0.0 < fraction <= 1.0:
        raise EigenError(f"variance fraction must lie in (0, 1], got {fraction}")
    spectrum = np.asarray(eigenvalues, dtype=np.float64)
    total = float(spectrum.sum()) if spectrum.size else 0.0
    if total <= 0.0:
        raise EigenError("eigenvalue spectrum is all zero")
    ratios = np.cumsum(spectrum) / total
    reached = np.nonzero(ratios >= fraction - FRACTION_SLACK)[0]
    return int(reached[0]) + 1 if reached.size else len(spectrum)


def _stack_rows(rows: Sequence[RoiVector]) -> np.ndarray:
    if len(rows) < 2:
        raise EigenError(f"PCA needs at least 2 rows, got {len(rows)}")
    lengths = {len(row) for row in rows}
    if len(lengths) != 1:
        raise EigenError(f"ragged rows: lengths {sorted(lengths)}")
    return np.vstack([row.values for row in rows]).astype(np.float64)


def fit_pca(
    rows: Sequence[RoiVector],
    fraction: Optional[float] = None,
    method: str = "auto",
) -> EigenModel:
    """Fit mean and eigenvectors of the unscaled scatter of `rows`.

    Args:
        rows: Equal-length sampled ROI rows, one per subject
        fraction: Eigenvalue mass to retain; defaults to the configured value
        method: "gram" (N x N inner products mapped back to data space),
            "scatter" (L x L) or "auto", which takes the Gram route when L > N

    Returns:
        EigenModel with components in descending eigenvalue order, or a
        degenerate model when all rows coincide

    Raises:
        EigenError: If the rows are ragged or fewer than two
    """
    data = _stack_rows(rows)
    count, length = data.shape
    mean = data.mean(axis=0)
    centered = data - mean
    use_gram = length > count if method == "auto" else method == "gram"
    solver = JacobiEigenSolver()

    if use_gram:
        values, basis = solver.solve(centered @ centered.T)
    else:
        values, basis = solver.solve(centered.T @ centered)
    trace = float(np.sum(centered * centered))
    keep = min(count - 1, length)
    nonzero = [i for i in range(len(values)) if values[i] > SPECTRUM_FLOOR * trace][:keep]

    if not nonzero:
        logger.warning(f"All {count} training rows coincide; eigen model is degenerate")
        return EigenModel(
            mean=mean,
            eigenvectors=np.zeros((0, length)),
            eigenvalues=np.zeros(0),
            retained=0,
            degenerate=True,
        )

    eigenvalues = np.clip(values[nonzero], 0.0, None)
    if use_gram:
        mapped = centered.T @ basis[:, nonzero]
        vectors = _orient(mapped / np.linalg.norm(mapped, axis=0))
    else:
        vectors = basis[:, nonzero]
    retained = select_components(
        eigenvalues, settings.variance_fraction if fraction is None else fraction
    )
    logger.info(
        f"PCA on {count}x{length} rows ({'gram' if use_gram else 'scatter'}): "
        f"{len(eigenvalues)} components, retaining {retained}"
    )
    return EigenModel(
        mean=mean, eigenvectors=vectors.T, eigenvalues=eigenvalues, retained=retained
    )


def with_retained(model: EigenModel, retained: int) -> EigenModel:
    return model.model_copy(update={"retained": retained})


def project(
    model: EigenModel, row: Union[RoiVector, np.ndarray], components: Optional[int] = None
) -> Projection:
    """Coefficients e_i . (Y - m) for the first `components` (default: retained) eigenvectors."""
    if model.degenerate:
        raise DegenerateModelError("cannot project onto a degenerate eigen model")
    values = row.values if isinstance(row, RoiVector) else np.asarray(row, dtype=np.float64)
    if len(values) != model.length:
        raise EigenError(f"row length {len(values)} does not match model length {model.length}")
    k = model.retained if components is None else components
    if not 1 <= k <= model.component_count:
        raise EigenError(f"cannot project on {k} of {model.component_count} components")
    subject_id = row.subject_id if isinstance(row, RoiVector) else ""
    return Projection(subject_id=subject_id, g=model.eigenvectors[:k] @ (values - model.mean))


def reconstruct(model: EigenModel, g: Sequence[float], subject_id: str = "") -> RoiVector:
    """Weighted sum of all stored eigenvectors plus the mean."""
    coefficients = np.asarray(g, dtype=np.float64)
    if len(coefficients) != model.component_count:
        raise EigenError(
            f"{len(coefficients)} coefficients for {model.component_count} eigenvectors"
        )
    return RoiVector(subject_id=subject_id, values=coefficients @ model.eigenvectors + model.mean)


def _load_values(
    ids: Sequence[str], hypo_loads: Union[Sequence[HypoLoadResult], Mapping[str, float]]
) -> List[float]:
    if isinstance(hypo_loads, Mapping):
        return [float(hypo_loads[sid]) for sid in ids]
    by_id = {r.subject_id: r.hypo_load for r in hypo_loads}
    return [by_id[sid] for sid in ids]


def nonbinary_rank(
    projections: Sequence[Projection],
    hypo_loads: Union[Sequence[HypoLoadResult], Mapping[str, float]],
    model: Optional[EigenModel] = None,
) -> NonbinaryResult:
    """Distances to the darkest subject; far from darkest ranks lightest."""
    if model is not None and model.degenerate:
        raise DegenerateModelError("eigen model is degenerate; refusing to rank on noise")
    ids = [p.subject_id for p in projections]
    try:
        loads = _load_values(ids, hypo_loads)
    except KeyError as e:
        raise EigenError(f"no HypoLoad for subject {e}") from e
    reference = int(np.argmax(loads))
    coefficients = np.vstack([p.g for p in projections])
    distances = np.linalg.norm(coefficients - coefficients[reference], axis=1)
    order = np.argsort(-distances, kind="stable")
    return NonbinaryResult(
        reference_id=ids[reference],
        distances={sid: float(d) for sid, d in zip(ids, distances)},
        ranking=Ranking(ordered_ids=[ids[i] for i in order]),
    )


def nonbinary_features(projection: Projection) -> List[float]:
    return [float(v) for v in projection.g]


def variance_sweep(
    model: EigenModel,
    rows: Sequence[RoiVector],
    hypo_loads: Union[Sequence[HypoLoadResult], Mapping[str, float]],
    truth: Clustering,
    fractions: Sequence[float],
) -> List[Tuple[float, int, float]]:
    """Accuracy of the nonbinary ranking for several retained-variance fractions."""
    results: List[Tuple[float, int, float]] = []
    sizes = truth.sizes()
    for fraction in fractions:
        retained = select_components(model.eigenvalues, fraction)
        trimmed = with_retained(model, retained)
        ranked = nonbinary_rank([project(trimmed, row) for row in rows], hypo_loads, trimmed)
        score = accuracy(rank_to_clusters(ranked.ranking, sizes), truth).accuracy
        logger.info(f"Variance fraction {fraction:.2f}: {retained} components, accuracy {score:.4f}")
        results.append((float(fraction), retained, score))
    return results
