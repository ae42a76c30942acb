"""Simulation scenarios, the common Dataset form, and the bike-sharing loader

Every scenario is a closed form in x1..x6 of a p=30 Uniform(-1, 1) design;
the remaining 24 columns are pure noise features.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from scipy.special import expit

from cross_spline_lab.errors import ConfigurationError, DataError
from cross_spline_lab.utils import read_csv, write_csv

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
RESPONSES = ("continuous", "binary")
DEFAULT_P = 30
CALIBRATION_DRAWS = 100_000


@dataclass(eq=False)
class Dataset:
    """Feature matrix, response, and a split label for every row"""

    X: np.ndarray
    y: np.ndarray
    kind: str
    feature_names: list[str]
    split: np.ndarray
    seed: int | None = None
    scenario: str | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.split = np.asarray(self.split, dtype=object)
        problems = []
        if self.X.ndim != 2:
            problems.append(f"X must be 2-D, got shape {self.X.shape}")
        elif self.y.shape != (self.X.shape[0],) or self.split.shape != (self.X.shape[0],):
            problems.append(f"X has {self.X.shape[0]} rows but y has {self.y.shape} and split {self.split.shape}")
        elif len(self.feature_names) != self.X.shape[1]:
            problems.append(f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns")
        if self.kind not in RESPONSES:
            problems.append(f"kind must be one of {RESPONSES}, got '{self.kind}'")
        if not set(self.split.tolist()) <= set(SPLITS):
            problems.append(f"split labels must be among {SPLITS}")
        if self.kind == "binary" and not np.isin(self.y, (0.0, 1.0)).all():
            problems.append("binary response must be 0/1")
        if problems:
            raise ConfigurationError(problems)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def rows(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def has(self, split: str) -> bool:
        return bool((self.split == split).any())

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.rows(split)
        return self.X[idx], self.y[idx]

    def sizes(self) -> dict[str, int]:
        return {s: int((self.split == s).sum()) for s in SPLITS}

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame["target"] = self.y
        frame["split"] = self.split
        return frame


def gen_design(n: int, p: int = DEFAULT_P, seed: int | np.random.SeedSequence = 0) -> np.ndarray:
    """n x p matrix of i.i.d. Uniform(-1, 1) draws"""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, p))


def _step(cond: np.ndarray) -> np.ndarray:
    return cond.astype(np.float64)


def _main_shared(x: np.ndarray) -> np.ndarray:
    """x1..x4 terms common to every main/2way/3way cont and jump scenario"""
    x1, x2, x3, x4 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    return x1 + 2 * x2 ** 2 + 2 * np.cbrt(1 + x3) + 2 * x4 * _step(x4 > 0)


def _main_cont(x):
    return _main_shared(x) + np.sin(2 * np.pi * x[:, 4]) + np.exp(x[:, 5])


def _main_jump(x):
    return _main_shared(x) + _step(x[:, 4] > 0) + 2 * _step(x[:, 5] > 0.5)


def _twoway_cont_terms(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return 2 * x1 * x2 + 2 * np.sin(np.pi * (x3 + x4)) + 2 * np.abs(x5 * x6)


def _twoway_jump_terms(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return (2 * _step(x1 > 0) * _step(x2 > 0) + 2 * _step(x3 > 0) * _step(x4 > 0)
            + 2 * x5 * _step(x6 > 0))


def _twoway_pure(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return 2 * x1 * x2 + np.sin(np.pi * (x3 + x4)) + x5 * np.sin(np.pi * x6)


def _threeway_cont(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return (_main_cont(x) + _twoway_cont_terms(x) + 3 * x1 * np.exp(np.abs(x2 * x3))
            + 3 * x5 * np.sin(np.pi * (x4 + 1.5 * x6)))


def _threeway_jump(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return (_main_jump(x) + _twoway_jump_terms(x)
            + 3 * _step(x1 > 0) * _step(x2 > 0.5) * _step(x3 < -0.5)
            + 3 * _step(x4 > 0) * _step(x5 < -0.5) * _step(x6 < -0.5))


def _threeway_pure(x):
    x1, x2, x3, x4, x5, x6 = x[:, :6].T
    return _twoway_pure(x) + 2 * x1 * x2 * x3 + 2 * x4 * np.sin(np.pi * (x5 + x6))


@dataclass(frozen=True)
class Scenario:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    description: str


SCENARIOS: dict[str, Scenario] = {
    s.name: s for s in (
        Scenario("main_cont", _main_cont, "continuous main effects"),
        Scenario("main_jump", _main_jump, "main effects with jumps in x5, x6"),
        Scenario("2way_cont", lambda x: _main_cont(x) + _twoway_cont_terms(x), "continuous two-way interactions"),
        Scenario("2way_jump", lambda x: _main_jump(x) + _twoway_jump_terms(x), "discontinuous two-way interactions"),
        Scenario("2way_pure", _twoway_pure, "pure two-way interactions, no main effects"),
        Scenario("3way_cont", _threeway_cont, "continuous three-way interactions"),
        Scenario("3way_jump", _threeway_jump, "discontinuous three-way interactions"),
        Scenario("3way_pure", _threeway_pure, "pure two- and three-way interactions"),
    )
}


def get_scenario(name: str) -> Scenario:
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario '{name}', valid names: {', '.join(SCENARIOS)}")
    return SCENARIOS[name]


def scenario_value(name: str, x: np.ndarray) -> np.ndarray | float:
    """Evaluate a scenario's f at one point (returns float) or at every row"""
    scenario = get_scenario(name)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] < 6:
        raise ConfigurationError(f"scenarios need at least 6 features, got {X.shape[1]}")
    values = scenario.f(X)
    return float(values[0]) if single else values


def calibrate_beta0(f_sample: np.ndarray, tol: float = 1e-10) -> float:
    """Intercept b with mean(sigmoid(b + f)) = 0.5, by bisection"""
    f_sample = np.asarray(f_sample, dtype=np.float64)
    if f_sample.size == 0:
        raise ConfigurationError("calibrate_beta0 needs a non-empty sample")

    def balance(b: float) -> float:
        return float(np.mean(expit(b + f_sample))) - 0.5

    lo, hi = -float(f_sample.max()) - 1.0, -float(f_sample.min()) + 1.0
    return float(bisect(balance, lo, hi, xtol=tol, maxiter=500))


def assign_splits(n: int, fractions: dict[str, float], rng: np.random.Generator) -> np.ndarray:
    """Seeded random split labels; every split but the last gets floor(fraction * n) rows"""
    names = list(fractions)
    order = rng.permutation(n)
    labels = np.empty(n, dtype=object)
    start = 0
    for i, name in enumerate(names):
        stop = n if i == len(names) - 1 else start + int(np.floor(fractions[name] * n))
        labels[order[start:stop]] = name
        start = stop
    return labels


def _draw_response(f: np.ndarray, response: str, beta0: float, rng: np.random.Generator) -> np.ndarray:
    if response == "continuous":
        return f + rng.standard_normal(f.shape[0])
    return _step(rng.uniform(size=f.shape[0]) < expit(beta0 + f))


def gen_dataset(name: str, n: int = 10_000, response: str = "continuous", seed: int = 0,
                n_test: int = 50_000, p: int = DEFAULT_P) -> Dataset:
    """Simulate a scenario: n rows split 70/30 train/val plus n_test test rows
    Args:
        name (str): scenario name
        n (int): training + validation rows
        response (str): 'continuous' (f + N(0, 1)) or 'binary' (logistic, balanced)
        seed (int): root seed; design, noise, test and calibration use independent branches
        n_test (int): rows in the companion test set
        p (int): number of features (>= 6)
    Returns:
        Dataset: simulated data
    """
    scenario = get_scenario(name)
    if response not in RESPONSES:
        raise ConfigurationError(f"response must be one of {RESPONSES}, got '{response}'")
    if p < 6:
        raise ConfigurationError(f"scenarios need p >= 6, got {p}")

    design_seq, test_seq, calib_seq, split_seq = np.random.SeedSequence(seed).spawn(4)
    beta0 = 0.0
    if response == "binary":
        beta0 = calibrate_beta0(scenario.f(gen_design(CALIBRATION_DRAWS, p, calib_seq)))
        logger.info(f"{name}: calibrated beta0 = {beta0:.6f}")

    X = gen_design(n, p, design_seq)
    y = _draw_response(scenario.f(X), response, beta0, np.random.default_rng(design_seq.spawn(1)[0]))
    split = assign_splits(n, {"train": 0.7, "val": 0.3}, np.random.default_rng(split_seq))

    if n_test > 0:
        X_test = gen_design(n_test, p, test_seq)
        y_test = _draw_response(scenario.f(X_test), response, beta0, np.random.default_rng(test_seq.spawn(1)[0]))
        X = np.vstack([X, X_test])
        y = np.concatenate([y, y_test])
        split = np.concatenate([split, np.full(n_test, "test", dtype=object)])

    return Dataset(
        X=X, y=y, kind=response, feature_names=[f"x{j + 1}" for j in range(p)], split=split,
        seed=seed, scenario=name, extras={"beta0": beta0},
    )


BIKE_PREDICTORS = ["season", "yr", "mnth", "hr", "holiday", "weekday", "workingday",
                   "weathersit", "temp", "hum", "windspeed"]
BIKE_COLUMNS = ["instant", "dteday", "season", "yr", "mnth", "hr", "holiday", "weekday", "workingday",
                "weathersit", "temp", "atemp", "hum", "windspeed", "casual", "registered", "cnt"]


def load_bike_sharing(path: str | Path, seed: int = 0) -> Dataset:
    """Read the UCI hourly bike-sharing CSV; target is log(cnt), split 50/25/25
    Args:
        path (str | Path): path to hour.csv
        seed (int): seed of the random split
    Returns:
        Dataset: 11 numeric predictors and the log-count target
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"bike-sharing file '{path}' not found")
    frame = pd.read_csv(path, dtype=str)
    missing = [c for c in BIKE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"'{path}' is missing columns: {', '.join(missing)}")

    numeric = frame[BIKE_PREDICTORS + ["cnt"]].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1) | ~(numeric["cnt"] > 0)
    if bad.any():
        # header is line 1
        lines = (np.flatnonzero(bad.to_numpy()) + 2).tolist()
        raise DataError(
            f"'{path}' has {len(lines)} unparseable rows, first at lines {lines[:10]}", rows=lines
        )

    X = numeric[BIKE_PREDICTORS].to_numpy(dtype=np.float64)
    y = np.log(numeric["cnt"].to_numpy(dtype=np.float64))
    split = assign_splits(len(frame), {"train": 0.5, "val": 0.25, "test": 0.25}, np.random.default_rng(seed))
    logger.info(f"loaded {len(frame)} bike-sharing rows from {path}")
    return Dataset(X=X, y=y, kind="continuous", feature_names=list(BIKE_PREDICTORS), split=split,
                   seed=seed, scenario="bike_sharing")


def save_dataset_csv(dataset: Dataset, path: str | Path, cfg_hash: str | None = None) -> Path:
    """Write features, target and split column after the provenance line"""
    return write_csv(dataset.to_frame(), path, cfg_hash, float_format="%.17g")


def load_dataset_csv(path: str | Path, kind: str = "continuous", target: str = "target",
                     split_column: str = "split") -> Dataset:
    """Read a canonical dataset CSV written by save_dataset_csv"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file '{path}' not found")
    frame = read_csv(path)
    missing = [c for c in (target, split_column) if c not in frame.columns]
    if missing:
        raise DataError(f"'{path}' is missing columns: {', '.join(missing)}")
    features = [c for c in frame.columns if c not in (target, split_column)]
    values = frame[features + [target]].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1)
    if bad.any():
        with open(path) as f:
            comments = sum(1 for line in f if line.startswith("#"))
        # header row plus provenance lines
        lines = (np.flatnonzero(bad.to_numpy()) + 2 + comments).tolist()
        raise DataError(f"'{path}' has unparseable rows, first at lines {lines[:10]}", rows=lines)
    return Dataset(
        X=values[features].to_numpy(dtype=np.float64), y=values[target].to_numpy(dtype=np.float64),
        kind=kind, feature_names=features, split=frame[split_column].astype(str).to_numpy(dtype=object),
    )
