from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from src.Evaluation.Rollout import EvaluationError
from src.utils.logger import get_logger


def iqm(values) -> float:
    """
    Mean of the pooled values after dropping floor(n/4) from each end of the sorted order.
    """
    pooled = np.sort(np.ravel(np.asarray(values, dtype=np.float64)))
    if pooled.size == 0:
        raise EvaluationError("IQM of an empty set")
    if np.ptp(pooled) == 0.0:
        return float(pooled[0])
    cut = pooled.size // 4
    return float(np.mean(pooled[cut:pooled.size - cut]))


def _iqm_rows(samples: np.ndarray) -> np.ndarray:
    ordered = np.sort(samples, axis=1)
    cut = ordered.shape[1] // 4
    means = np.mean(ordered[:, cut:ordered.shape[1] - cut], axis=1)
    return np.where(ordered[:, 0] == ordered[:, -1], ordered[:, 0], means)


@dataclass
class AggregateReport:
    tasks: List[str]
    means: List[float]
    sds: List[float]
    normalized: np.ndarray
    iqm: float
    ci_low: float
    ci_high: float
    excluded: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tasks": list(self.tasks),
            "mean": list(self.means),
            "sd": list(self.sds),
            "iqm": self.iqm,
            "ci": [self.ci_low, self.ci_high],
            "excluded": list(self.excluded),
        }


def normalization_bounds(results: Dict[str, np.ndarray]) -> np.ndarray:
    """
    Per-task (min, max) over every method and seed.
    :param results: method name -> (tasks x seeds) matrix, all with the same task order.
    :return: (tasks x 2) array.
    """
    if not results:
        raise EvaluationError("no results to normalize against")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in results.values()], axis=1)
    return np.stack([stacked.min(axis=1), stacked.max(axis=1)], axis=1)


def iqm_with_ci(returns, n_boot: int = 2000, seed: int = 0, bounds: np.ndarray = None,
                task_names: Sequence[str] = None) -> AggregateReport:
    """
    IQM of the pooled (optionally min-max normalized) task x seed matrix with a 95% stratified
    bootstrap interval: seeds are resampled within every task independently.

    :param bounds: Per-task (min, max); tasks with max == min are excluded with a warning.
        Without bounds the values are pooled as they are.
    """
    logger = get_logger()
    values = np.asarray(returns, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise EvaluationError("returns must be a (tasks x seeds) matrix with at least one task")
    if values.shape[1] < 2:
        raise EvaluationError("at least two seeds are needed for a bootstrap interval")
    names = list(task_names) if task_names is not None else [f"task{i}" for i in range(values.shape[0])]
    means = [float(m) for m in values.mean(axis=1)]
    sds = [float(s) for s in values.std(axis=1)]

    excluded = []
    if bounds is not None:
        bounds = np.asarray(bounds, dtype=np.float64)
        keep = bounds[:, 1] > bounds[:, 0]
        for name, kept in zip(names, keep):
            if not kept:
                logger.warning(f"Task {name} has a degenerate normalization range and is left out of the IQM")
                excluded.append(name)
        if not np.any(keep):
            raise EvaluationError("every task has a degenerate normalization range")
        values = (values[keep] - bounds[keep, :1]) / (bounds[keep, 1:] - bounds[keep, :1])

    point = iqm(values)
    n_tasks, n_seeds = values.shape
    rng = np.random.default_rng(seed)
    picks = rng.integers(n_seeds, size=(n_boot, n_tasks, n_seeds))
    samples = np.take_along_axis(np.broadcast_to(values, (n_boot, n_tasks, n_seeds)), picks, axis=2)
    boot = _iqm_rows(samples.reshape(n_boot, -1)) if n_boot > 0 else np.array([point])
    low, high = np.percentile(boot, [2.5, 97.5])

    return AggregateReport(names, means, sds, values, point, float(min(low, point)), float(max(high, point)), excluded)
