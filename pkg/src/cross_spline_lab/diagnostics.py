"""Post-hoc diagnostics: ICE curves, 1d/2d partial dependence, permutation importance, H-statistic

Every diagnostic accepts a fitted Model or any callable mapping an (n, p) matrix
to n predictions, so hand-built reference functions are inspected the same way.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np
import pandas as pd

from cross_spline_lab.errors import ConfigurationError
from cross_spline_lab.model import Model, predict
from cross_spline_lab.simgen import Dataset
from cross_spline_lab.train import evaluate

logger = logging.getLogger(__name__)

GRID_SIZE = 50
PD_SUBSAMPLE = 500
H_SUBSAMPLE = 300
CHUNK_ROWS = 100_000

Predictor = Model | Callable[[np.ndarray], np.ndarray]


def _predict_fn(model: Predictor) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model, Model):
        return lambda X: predict(model, X)
    if callable(model):
        return lambda X: np.asarray(model(X), dtype=np.float64)
    raise ConfigurationError(f"cannot predict with {type(model).__name__}")


def _predict_chunked(fn, X: np.ndarray) -> np.ndarray:
    if X.shape[0] <= CHUNK_ROWS:
        return fn(X)
    return np.concatenate([fn(X[i:i + CHUNK_ROWS]) for i in range(0, X.shape[0], CHUNK_ROWS)])


def _feature_index(dataset: Dataset, feature: int | str) -> int:
    if isinstance(feature, str):
        if feature not in dataset.feature_names:
            raise ConfigurationError(f"unknown feature '{feature}'")
        return dataset.feature_names.index(feature)
    if not 0 <= feature < dataset.p:
        raise ConfigurationError(f"feature index {feature} out of range for {dataset.p} features")
    return int(feature)


def feature_grid(dataset: Dataset, j: int, grid_size: int = GRID_SIZE) -> np.ndarray:
    """grid_size equally spaced points over the observed [min, max] of feature j"""
    lo, hi = dataset.X[:, j].min(), dataset.X[:, j].max()
    if lo == hi:
        logger.warning(f"feature '{dataset.feature_names[j]}' is constant; curve has a single point")
        return np.array([lo])
    return np.linspace(lo, hi, grid_size)


def _subsample(dataset: Dataset, size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if size >= dataset.n:
        return np.arange(dataset.n)
    return np.sort(rng.choice(dataset.n, size=size, replace=False))


@dataclass
class Curve:
    """One feature's ICE or PD curve; ``ice`` holds one row per observation"""

    feature: str
    grid: np.ndarray
    values: np.ndarray
    ice: np.ndarray | None = None
    anchor_row: int | None = None
    rows: np.ndarray | None = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"grid": self.grid, "value": self.values})


@dataclass
class Surface:
    """2d partial dependence: values[a, b] at (grid_j[a], grid_k[b])"""

    feature_j: str
    feature_k: str
    grid_j: np.ndarray
    grid_k: np.ndarray
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        gj, gk = np.meshgrid(self.grid_j, self.grid_k, indexing="ij")
        return pd.DataFrame({self.feature_j: gj.ravel(), self.feature_k: gk.ravel(), "value": self.values.ravel()})


@dataclass
class ImportanceTable:
    """Metric degradation per feature; larger means more important"""

    features: list[str]
    scores: np.ndarray
    metric: str
    repeats: int
    seed: int
    baseline: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": self.features, "score": self.scores})

    def score(self, feature: str) -> float:
        return float(self.scores[self.features.index(feature)])


@dataclass
class HStat:
    feature_j: str
    feature_k: str
    h2: float
    subsample: int


def ice_matrix(model: Predictor, dataset: Dataset, rows: np.ndarray, j: int, grid: np.ndarray) -> np.ndarray:
    """Predictions for every (row, grid value) with column j overwritten, shape (rows, grid)"""
    fn = _predict_fn(model)
    block = np.repeat(dataset.X[rows], grid.size, axis=0)
    block[:, j] = np.tile(grid, rows.size)
    return _predict_chunked(fn, block).reshape(rows.size, grid.size)


def ice(model: Predictor, dataset: Dataset, row: int, feature: int | str, grid_size: int = GRID_SIZE) -> Curve:
    """Prediction path of one observation as a feature sweeps its range"""
    if not 0 <= row < dataset.n:
        raise ConfigurationError(f"row {row} out of range for {dataset.n} rows")
    j = _feature_index(dataset, feature)
    grid = feature_grid(dataset, j, grid_size)
    values = ice_matrix(model, dataset, np.array([row]), j, grid)[0]
    return Curve(feature=dataset.feature_names[j], grid=grid, values=values, ice=values[None, :],
                 anchor_row=row, rows=np.array([row]))


def random_anchor(dataset: Dataset, seed: int) -> int:
    """Uniformly drawn row for an ICE curve"""
    return int(np.random.default_rng(seed).integers(dataset.n))


def pdp1(model: Predictor, dataset: Dataset, feature: int | str, grid_size: int = GRID_SIZE,
         subsample: int = PD_SUBSAMPLE, seed: int = 0) -> Curve:
    """1d partial dependence: the mean of ICE curves over a seeded row subsample"""
    j = _feature_index(dataset, feature)
    grid = feature_grid(dataset, j, grid_size)
    rows = _subsample(dataset, subsample, seed)
    matrix = ice_matrix(model, dataset, rows, j, grid)
    return Curve(feature=dataset.feature_names[j], grid=grid, values=matrix.mean(axis=0), ice=matrix, rows=rows)


def pdp2(model: Predictor, dataset: Dataset, j: int | str, k: int | str, grid_size: int = GRID_SIZE,
         subsample: int = PD_SUBSAMPLE, seed: int = 0) -> Surface:
    """2d partial dependence over a grid_size x grid_size lattice"""
    j, k = _feature_index(dataset, j), _feature_index(dataset, k)
    if j == k:
        raise ConfigurationError("pdp2 needs two different features")
    fn = _predict_fn(model)
    grid_j, grid_k = feature_grid(dataset, j, grid_size), feature_grid(dataset, k, grid_size)
    rows = _subsample(dataset, subsample, seed)
    base = dataset.X[rows]
    values = np.empty((grid_j.size, grid_k.size))
    for a, gj in enumerate(grid_j):
        block = np.repeat(base, grid_k.size, axis=0)
        block[:, j] = gj
        block[:, k] = np.tile(grid_k, rows.size)
        values[a] = _predict_chunked(fn, block).reshape(rows.size, grid_k.size).mean(axis=0)
    return Surface(feature_j=dataset.feature_names[j], feature_k=dataset.feature_names[k],
                   grid_j=grid_j, grid_k=grid_k, values=values)


def default_metric(dataset: Dataset) -> str:
    return "auc" if dataset.kind == "binary" else "mse"


def permutation_importance(model: Predictor, dataset: Dataset, metric: str | None = None, repeats: int = 5,
                           seed: int = 0, split: str | None = None) -> ImportanceTable:
    """Average metric degradation when each feature column is permuted
    Args:
        model (Predictor): fitted model or prediction function
        dataset (Dataset): data holding the evaluation split
        metric (str | None): 'mse', 'logloss' or 'auc'; defaults by response kind
        repeats (int): permutations per feature
        seed (int): permutation seed
        split (str | None): evaluation split, defaults to test, else val, else all rows
    Returns:
        ImportanceTable: one score per feature
    """
    metric = metric or default_metric(dataset)
    if metric == "auc" and dataset.kind != "binary":
        raise ConfigurationError("auc importance needs a binary dataset")
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if split is None:
        split = next((s for s in ("test", "val") if dataset.has(s)), None)
    if split is None:
        X, y = dataset.X, dataset.y
    else:
        X, y = dataset.arrays(split)

    fn = _predict_fn(model)
    baseline = evaluate(metric, y, _predict_chunked(fn, X))
    sign = -1.0 if metric == "auc" else 1.0
    rng = np.random.default_rng(seed)
    scores = np.zeros(dataset.p)
    for j in range(dataset.p):
        total = 0.0
        for _ in range(repeats):
            shuffled = X.copy()
            shuffled[:, j] = shuffled[rng.permutation(X.shape[0]), j]
            total += sign * (evaluate(metric, y, _predict_chunked(fn, shuffled)) - baseline)
        scores[j] = total / repeats
    return ImportanceTable(features=list(dataset.feature_names), scores=scores, metric=metric,
                           repeats=repeats, seed=seed, baseline=baseline)


def top_features(table: ImportanceTable, count: int = 3) -> list[str]:
    order = np.argsort(-table.scores, kind="stable")
    return [table.features[i] for i in order[:count]]


def _partial_dependence_at_rows(fn, base: np.ndarray, columns: list[int]) -> np.ndarray:
    """PD over the base sample evaluated at each base row's own values of ``columns``"""
    n = base.shape[0]
    block = np.tile(base, (n, 1))
    for c in columns:
        block[:, c] = np.repeat(base[:, c], n)
    values = _predict_chunked(fn, block).reshape(n, n).mean(axis=1)
    return values - values.mean()


def h_statistic(model: Predictor, dataset: Dataset, j: int | str, k: int | str,
                subsample: int = H_SUBSAMPLE, seed: int = 0) -> HStat:
    """Squared Friedman-Popescu interaction strength of a feature pair
    Returns:
        HStat: H^2 in [0, 1]; 0 when the model is constant in both features
    """
    j, k = _feature_index(dataset, j), _feature_index(dataset, k)
    if j == k:
        raise ConfigurationError("h_statistic needs two different features")
    j, k = min(j, k), max(j, k)
    fn = _predict_fn(model)
    rows = _subsample(dataset, subsample, seed)
    base = dataset.X[rows]

    pd_jk = _partial_dependence_at_rows(fn, base, [j, k])
    pd_j = _partial_dependence_at_rows(fn, base, [j])
    pd_k = _partial_dependence_at_rows(fn, base, [k])
    denominator = float(np.sum(pd_jk ** 2))
    names = dataset.feature_names
    if denominator == 0.0:
        logger.warning(f"model is constant in '{names[j]}' and '{names[k]}'; H^2 set to 0")
        return HStat(feature_j=names[j], feature_k=names[k], h2=0.0, subsample=rows.size)
    h2 = float(np.sum((pd_jk - pd_j - pd_k) ** 2)) / denominator
    return HStat(feature_j=names[j], feature_k=names[k], h2=float(np.clip(h2, 0.0, 1.0)), subsample=rows.size)


def rank_interactions(model: Predictor, dataset: Dataset, features: list[int | str] | None = None,
                      subsample: int = H_SUBSAMPLE, seed: int = 0) -> list[HStat]:
    """H^2 for every pair of the given features, largest first"""
    indices = [_feature_index(dataset, f) for f in features] if features is not None else list(range(dataset.p))
    stats = [h_statistic(model, dataset, a, b, subsample, seed) for a, b in combinations(indices, 2)]
    return sorted(stats, key=lambda s: -s.h2)


def interactions_frame(stats: list[HStat]) -> pd.DataFrame:
    return pd.DataFrame({
        "feature_j": [s.feature_j for s in stats],
        "feature_k": [s.feature_k for s in stats],
        "h2": [s.h2 for s in stats],
        "subsample": [s.subsample for s in stats],
    })
