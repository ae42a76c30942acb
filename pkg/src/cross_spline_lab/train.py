"""Mini-batch ADAM fitting with early stopping, metrics, and random search"""

import copy
import logging
import math
import multiprocessing
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from cross_spline_lab.errors import ConfigurationError, CsnError, NonFiniteError, SearchError, UndefinedMetricError
from cross_spline_lab.model import (
    LOSSES,
    CsnConfig,
    FcnnConfig,
    Model,
    build_csn,
    build_fcnn,
    gradients,
    loss_value,
    predict,
)
from cross_spline_lab.nncore import AdamState, adam_update
from cross_spline_lab.simgen import Dataset
from cross_spline_lab.spline import column_stats

logger = logging.getLogger(__name__)

METRICS = ("mse", "auc", "logloss")


@dataclass
class TrainConfig:
    """Optimizer and stopping settings for one fit"""

    loss: str = "mse"
    lr: float = 0.02
    batch_fraction: float = 0.01
    decay: float = 0.995
    patience: int = 50
    max_epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        problems = []
        if self.loss not in LOSSES:
            problems.append(f"loss must be one of {LOSSES}, got '{self.loss}'")
        if self.patience < 1:
            problems.append(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            problems.append(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 < self.batch_fraction <= 1:
            problems.append(f"batch_fraction must be in (0, 1], got {self.batch_fraction}")
        if problems:
            raise ConfigurationError(problems)

    @classmethod
    def from_model_config(cls, cfg: CsnConfig | FcnnConfig) -> "TrainConfig":
        return cls(
            loss="logloss" if cfg.head == "binary" else "mse",
            lr=cfg.lr, batch_fraction=cfg.batch_fraction, decay=cfg.decay,
            patience=cfg.patience, max_epochs=cfg.max_epochs, seed=cfg.seed,
        )


@dataclass
class FitHistory:
    """Per-epoch losses (epoch 1 is index 0) and the stopping outcome"""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    restored_best: bool = False
    failure: str | None = None

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else math.inf

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": np.arange(1, len(self.train_loss) + 1),
            "lr": self.lr,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
        })


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Effective rate lr * decay**epoch, epoch counted from 0"""
    return cfg.lr * cfg.decay ** epoch


def dataset_loss(model: Model, X: np.ndarray, y: np.ndarray, loss: str) -> float:
    return loss_value(loss, y, predict(model, X))


def fit(model: Model, data: Dataset, cfg: TrainConfig) -> tuple[Model, FitHistory]:
    """Train a copy of model on the train split, early-stopped on the val split
    Args:
        model (Model): initialized network, left untouched
        data (Dataset): needs non-empty 'train' and 'val' splits
        cfg (TrainConfig): optimizer and stopping settings
    Returns:
        tuple[Model, FitHistory]: model restored to its best epoch, and the history
    """
    if not data.has("train") or not data.has("val"):
        raise ConfigurationError("fit needs non-empty train and val splits")
    X_tr, y_tr = data.arrays("train")
    X_va, y_va = data.arrays("val")
    n = X_tr.shape[0]
    batch_size = max(1, math.ceil(cfg.batch_fraction * n))

    model = copy.deepcopy(model)
    flat = model.get_flat()
    best_flat = flat.copy()
    state = AdamState.zeros(flat.size, base_lr=cfg.lr, decay=cfg.decay,
                            beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history = FitHistory()
    best_val = math.inf

    for epoch in range(cfg.max_epochs):
        state = state.at_epoch(epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        try:
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                grads = gradients(model, (X_tr[idx], y_tr[idx]), cfg.loss)
                flat, state = adam_update(flat, grads, state)
                model.set_flat(flat)
            train_loss = dataset_loss(model, X_tr, y_tr, cfg.loss)
            val_loss = dataset_loss(model, X_va, y_va, cfg.loss)
            if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
                raise NonFiniteError(f"non-finite loss after epoch {epoch + 1}")
        except NonFiniteError as e:
            history.failure = f"epoch {epoch + 1}: {e}"
            logger.warning(f"fit aborted at {history.failure}")
            break

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.lr.append(state.lr)
        history.stopped_epoch = epoch + 1
        logger.debug(f"epoch {epoch + 1}: train {train_loss:.6f} val {val_loss:.6f} lr {state.lr:.6g}")

        if val_loss < best_val:
            best_val = val_loss
            best_flat = flat.copy()
            history.best_epoch = epoch + 1
        elif epoch + 1 - history.best_epoch >= cfg.patience:
            break

    model.set_flat(best_flat)
    history.restored_best = history.best_epoch > 0
    return model, history


def auc_score(y: np.ndarray, pred: np.ndarray) -> float:
    """Mann-Whitney AUC with midranks for tied scores"""
    y = np.asarray(y, dtype=np.float64)
    positives = y == 1
    n_pos = int(positives.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = rankdata(pred)
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def evaluate(metric: str, y: np.ndarray, pred: np.ndarray) -> float:
    """mse, auc or logloss of predictions against y"""
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if y.shape != pred.shape:
        raise ConfigurationError(f"y has shape {y.shape} but predictions have shape {pred.shape}")
    if metric == "auc":
        return auc_score(y, pred)
    if metric in LOSSES:
        return loss_value(metric, y, pred)
    raise ConfigurationError(f"unknown metric '{metric}', expected one of {METRICS}")


def split_metrics(model: Model, data: Dataset, splits: tuple[str, ...] = ("train", "val", "test")) -> dict[str, float]:
    """mse (regression) or logloss + auc (binary) for every split present"""
    out = {}
    for split in splits:
        if not data.has(split):
            continue
        X, y = data.arrays(split)
        pred = predict(model, X)
        if data.kind == "binary":
            out[f"{split}_logloss"] = evaluate("logloss", y, pred)
            out[f"{split}_auc"] = evaluate("auc", y, pred) if 0 < y.sum() < y.size else math.nan
        else:
            out[f"{split}_mse"] = evaluate("mse", y, pred)
    return out


@dataclass
class SearchSpace:
    """Candidate values per hyperparameter; trials sample uniformly from the product"""

    candidates: dict[str, list]

    def __post_init__(self):
        empty = [name for name, values in self.candidates.items() if len(values) == 0]
        if not self.candidates or empty:
            raise ConfigurationError([f"search space entry '{name}' has no candidates" for name in empty]
                                     or ["search space is empty"])

    @property
    def size(self) -> int:
        return math.prod(len(values) for values in self.candidates.values())

    def sample(self, rng: np.random.Generator) -> dict:
        return {name: values[int(rng.integers(len(values)))] for name, values in self.candidates.items()}


def treenet_search_space() -> SearchSpace:
    return SearchSpace({
        "lr": [0.01, 0.02],
        "batch_fraction": [0.01, 0.02],
        "k": [0, 1, 2, 3],
        "m": [3, 5, 7],
        "d": [10, 20, 30, 40],
    })


def fcnn_search_space() -> SearchSpace:
    return SearchSpace({
        "widths": [
            (20, 10, 5), (40, 20, 10), (60, 30, 15), (80, 40, 20), (100, 50, 25),
            (120, 60, 30, 15), (100, 50, 25, 12), (80, 40, 20, 10),
            (10, 20, 40, 20, 10), (15, 30, 60, 30, 15),
        ],
        "lr": [0.0001, 0.0005, 0.001, 0.002, 0.004, 0.008, 0.01, 0.015, 0.02],
        "batch_fraction": [0.01, 0.02, 0.04],
    })


@dataclass
class CsnBuilder:
    """Builds a CSN for a trial from a base config plus sampled overrides"""

    base: CsnConfig

    def __call__(self, params: dict, seed: int, data: Dataset) -> tuple[Model, TrainConfig, CsnConfig]:
        cfg = replace(self.base, **params, seed=seed)
        model = build_csn(cfg, column_stats(data.arrays("train")[0]), data.feature_names)
        return model, TrainConfig.from_model_config(cfg), cfg


@dataclass
class FcnnBuilder:
    """Builds an FCNN for a trial from a base config plus sampled overrides"""

    base: FcnnConfig

    def __call__(self, params: dict, seed: int, data: Dataset) -> tuple[Model, TrainConfig, FcnnConfig]:
        cfg = replace(self.base, **params, seed=seed)
        X_train = data.arrays("train")[0]
        model = build_fcnn(cfg, data.p, column_stats(X_train), data.feature_names)
        return model, TrainConfig.from_model_config(cfg), cfg


@dataclass
class TrialRecord:
    trial: int
    seed: int
    params: dict
    status: str = "ok"
    val_loss: float = math.nan
    train_loss: float = math.nan
    val_auc: float = math.nan
    best_epoch: int = 0
    stopped_epoch: int = 0
    error: str = ""


@dataclass
class SearchResult:
    best_config: CsnConfig | FcnnConfig
    best_params: dict
    best_model: Model
    best_history: FitHistory
    log: list[TrialRecord]

    def log_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.log:
            row = asdict(record)
            params = row.pop("params")
            row.update({name: str(list(v)) if isinstance(v, tuple) else v for name, v in params.items()})
            rows.append(row)
        return pd.DataFrame(rows)


def _run_trial(task: tuple) -> tuple[TrialRecord, Model | None, FitHistory | None, object]:
    index, params, seed, data, builder = task
    record = TrialRecord(trial=index, seed=seed, params=params)
    try:
        model, train_cfg, cfg = builder(params, seed, data)
        model, history = fit(model, data, train_cfg)
        if history.best_epoch == 0:
            raise NonFiniteError(history.failure or "no finite validation loss")
    except (CsnError, ValueError, ArithmeticError) as e:
        record.status = "failed"
        record.error = str(e)
        logger.warning(f"trial {index} failed: {e}")
        return record, None, None, None

    record.val_loss = history.best_val_loss
    record.train_loss = history.train_loss[history.best_epoch - 1]
    record.best_epoch = history.best_epoch
    record.stopped_epoch = history.stopped_epoch
    if data.kind == "binary":
        X_va, y_va = data.arrays("val")
        if 0 < y_va.sum() < y_va.size:
            record.val_auc = evaluate("auc", y_va, predict(model, X_va))
    return record, model, history, cfg


def random_search(space: SearchSpace, trials: int, data: Dataset, builder, seed: int = 0,
                  jobs: int = 1) -> SearchResult:
    """Fit ``trials`` uniformly drawn configurations and keep the best validation loss
    Args:
        space (SearchSpace): candidate values
        trials (int): number of draws (20 in the reference protocol), 1 for a single-combination space
        data (Dataset): train/val splits used for fitting and selection
        builder: callable(params, seed, data) -> (model, TrainConfig, config)
        seed (int): seeds both the draws and each trial's own stream
        jobs (int): worker processes; results merge by trial index
    Returns:
        SearchResult: best config, model and history, plus the per-trial log
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    if space.size == 1 and trials > 1:
        logger.info(f"search space has a single combination, running 1 trial instead of {trials}")
        trials = 1
    rng = np.random.default_rng(seed)
    draws = [space.sample(rng) for _ in range(trials)]
    trial_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]
    tasks = [(i, draws[i], trial_seeds[i], data, builder) for i in range(trials)]

    if jobs > 1 and trials > 1:
        with multiprocessing.Pool(min(jobs, trials)) as pool:
            results = pool.map(_run_trial, tasks)
    else:
        results = [_run_trial(task) for task in tasks]

    log = [record for record, _, _, _ in results]
    ok = [r for r in results if r[0].status == "ok"]
    if not ok:
        raise SearchError({record.trial: record.error for record in log})
    best_record, best_model, best_history, best_cfg = min(ok, key=lambda r: (r[0].val_loss, r[0].trial))
    logger.info(f"best trial {best_record.trial} with validation loss {best_record.val_loss:.6f}")
    return SearchResult(best_config=best_cfg, best_params=best_record.params, best_model=best_model,
                        best_history=best_history, log=log)
