"""Cross spline networks, the dense baseline network, and model files

A CSN evaluates

    standardize -> spline basis (p -> width) -> affine (width -> d)
                -> k cross layers (d -> d) -> affine (d -> 1) [-> sigmoid]

An FCNN replaces everything after standardization by relu hidden layers.
All weights live in numpy arrays listed by ``Model.blocks()``; the flat
parameter vector is their concatenation in that order.
"""

import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from cross_spline_lab import __version__
from cross_spline_lab.errors import ConfigurationError, ModelFormatError, ModelVersionError, NonFiniteError
from cross_spline_lab.nncore import (
    AffineParams,
    CrossParams,
    activation,
    activation_backward,
    affine,
    affine_backward,
    cross_layer,
    cross_layer_backward,
    glorot_uniform,
)
from cross_spline_lab.spline import BasisKind, ColumnStats, SplineParams, init_bases, spline_backward, spline_forward

logger = logging.getLogger(__name__)

HEADS = ("regression", "binary")
LOSSES = ("mse", "logloss")
CROSS_VARIANT = "x0*(W.xl+b)+xl"
FORMAT_NAME = "cross-spline-lab/model"
FORMAT_VERSION = 1
PROB_CLIP = 1e-12


def _training_problems(cfg) -> list[str]:
    problems = []
    if cfg.head not in HEADS:
        problems.append(f"head must be one of {HEADS}, got '{cfg.head}'")
    if not cfg.lr > 0:
        problems.append(f"lr must be > 0, got {cfg.lr}")
    if not 0 < cfg.batch_fraction <= 1:
        problems.append(f"batch_fraction must be in (0, 1], got {cfg.batch_fraction}")
    if not 0 < cfg.decay <= 1:
        problems.append(f"decay must be in (0, 1], got {cfg.decay}")
    if cfg.patience < 1:
        problems.append(f"patience must be >= 1, got {cfg.patience}")
    if cfg.max_epochs < 1:
        problems.append(f"max_epochs must be >= 1, got {cfg.max_epochs}")
    return problems


def _from_mapping(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError([f"unknown {cls.__name__} field '{name}'" for name in sorted(unknown)])
    return cls(**values)


@dataclass
class CsnConfig:
    """Architecture and training hyperparameters of a cross spline net"""

    basis: BasisKind = field(default_factory=BasisKind)
    m: int = 5
    d: int = 20
    k: int = 2
    head: str = "regression"
    lr: float = 0.02
    batch_fraction: float = 0.01
    decay: float = 0.995
    patience: int = 50
    max_epochs: int = 500
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        self.basis = BasisKind.parse(self.basis)
        problems = []
        if self.m < 1:
            problems.append(f"m must be >= 1, got {self.m}")
        if self.d < 1:
            problems.append(f"d must be >= 1, got {self.d}")
        if self.k < 0:
            problems.append(f"k must be >= 0, got {self.k}")
        problems += _training_problems(self)
        if problems:
            raise ConfigurationError(problems)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["basis"] = self.basis.to_dict()
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "CsnConfig":
        return _from_mapping(cls, values)


@dataclass
class FcnnConfig:
    """Hidden widths and training hyperparameters of the dense baseline"""

    widths: tuple[int, ...] = (20, 10, 5)
    head: str = "regression"
    lr: float = 0.002
    batch_fraction: float = 0.01
    decay: float = 0.995
    patience: int = 50
    max_epochs: int = 500
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        problems = []
        if not self.widths:
            problems.append("fcnn needs at least one hidden layer")
        if any(w < 1 for w in self.widths):
            problems.append(f"hidden widths must be positive, got {list(self.widths)}")
        problems += _training_problems(self)
        if problems:
            raise ConfigurationError(problems)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["widths"] = list(self.widths)
        return out

    @classmethod
    def from_dict(cls, values: dict) -> "FcnnConfig":
        return _from_mapping(cls, values)


class Model:
    """Shared plumbing: standardization, flat parameters, prediction head"""

    family = "model"
    config: CsnConfig | FcnnConfig
    feature_names: list[str]
    input_mean: np.ndarray
    input_scale: np.ndarray

    def blocks(self) -> list[tuple[str, np.ndarray, bool]]:
        """(name, array, trainable) for every parameter array, in flat order"""
        raise NotImplementedError

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Head score before the output link, plus a cache for backward"""
        raise NotImplementedError

    def backward(self, cache: tuple, d_score: np.ndarray) -> list[np.ndarray]:
        """Gradients for every block, in ``blocks()`` order"""
        raise NotImplementedError

    @property
    def p(self) -> int:
        return self.input_mean.shape[0]

    @property
    def binary(self) -> bool:
        return self.config.head == "binary"

    @property
    def n_params(self) -> int:
        return sum(a.size for _, a, _ in self.blocks())

    @property
    def n_trainable(self) -> int:
        return sum(a.size for _, a, trainable in self.blocks() if trainable)

    def trainable_mask(self) -> np.ndarray:
        return np.concatenate([np.full(a.size, t) for _, a, t in self.blocks()])

    def get_flat(self, trainable_only: bool = True) -> np.ndarray:
        arrays = [a.ravel() for _, a, t in self.blocks() if t or not trainable_only]
        return np.concatenate(arrays) if arrays else np.zeros(0)

    def set_flat(self, flat: np.ndarray, trainable_only: bool = True) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        expected = self.n_trainable if trainable_only else self.n_params
        if flat.shape != (expected,):
            raise ConfigurationError(f"flat vector has shape {flat.shape}, model expects ({expected},)")
        offset = 0
        for _, array, trainable in self.blocks():
            if trainable_only and not trainable:
                continue
            array[...] = flat[offset:offset + array.size].reshape(array.shape)
            offset += array.size

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ConfigurationError(f"model expects {self.p} feature columns, got shape {X.shape}")
        return (X - self.input_mean) / self.input_scale


@dataclass(eq=False)
class CsnModel(Model):
    config: CsnConfig
    spline: SplineParams
    projection: AffineParams
    cross: list[CrossParams]
    head: AffineParams
    feature_names: list[str]
    input_mean: np.ndarray
    input_scale: np.ndarray

    family = "csn"

    def blocks(self) -> list[tuple[str, np.ndarray, bool]]:
        frozen = self.config.basis.frozen_slopes
        out = [("spline.alpha", self.spline.alpha, True), ("spline.beta", self.spline.beta, not frozen)]
        if self.spline.w is not None:
            out.append(("spline.w", self.spline.w, True))
        out += [("projection.W", self.projection.W, True), ("projection.b", self.projection.b, True)]
        for l, layer in enumerate(self.cross):
            out += [(f"cross.{l}.W", layer.W, True), (f"cross.{l}.b", layer.b, True)]
        out += [("head.W", self.head.W, True), ("head.b", self.head.b, True)]
        return out

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, tuple]:
        Z = self.standardize(X)
        B = spline_forward(Z, self.spline, self.config.basis)
        x0 = affine(B, self.projection)
        xs = [x0]
        for layer in self.cross:
            xs.append(cross_layer(x0, xs[-1], layer))
        score = affine(xs[-1], self.head)[:, 0]
        return score, (Z, B, xs)

    def backward(self, cache: tuple, d_score: np.ndarray) -> list[np.ndarray]:
        Z, B, xs = cache
        d_x, g_head = affine_backward(xs[-1], self.head, d_score[:, None])
        d_x0 = np.zeros_like(xs[0])
        cross_grads = []
        for l in reversed(range(len(self.cross))):
            dx0, d_x, g = cross_layer_backward(xs[0], xs[l], self.cross[l], d_x)
            d_x0 += dx0
            cross_grads.append(g)
        cross_grads.reverse()
        d_x0 += d_x
        d_B, g_proj = affine_backward(B, self.projection, d_x0)
        _, g_spline = spline_backward(Z, self.spline, self.config.basis, d_B)

        grads = [g_spline.alpha, g_spline.beta]
        if self.spline.w is not None:
            grads.append(g_spline.w)
        grads += [g_proj.W, g_proj.b]
        for g in cross_grads:
            grads += [g.W, g.b]
        grads += [g_head.W, g_head.b]
        return grads


@dataclass(eq=False)
class FcnnModel(Model):
    config: FcnnConfig
    hidden: list[AffineParams]
    head: AffineParams
    feature_names: list[str]
    input_mean: np.ndarray
    input_scale: np.ndarray

    family = "fcnn"

    def blocks(self) -> list[tuple[str, np.ndarray, bool]]:
        out = []
        for i, layer in enumerate(self.hidden):
            out += [(f"hidden.{i}.W", layer.W, True), (f"hidden.{i}.b", layer.b, True)]
        out += [("head.W", self.head.W, True), ("head.b", self.head.b, True)]
        return out

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, tuple]:
        h = self.standardize(X)
        inputs, pre = [], []
        for layer in self.hidden:
            inputs.append(h)
            z = affine(h, layer)
            pre.append(z)
            h = activation("relu", z)
        score = affine(h, self.head)[:, 0]
        return score, (inputs, pre, h)

    def backward(self, cache: tuple, d_score: np.ndarray) -> list[np.ndarray]:
        inputs, pre, h = cache
        d_h, g_head = affine_backward(h, self.head, d_score[:, None])
        hidden_grads = []
        for i in reversed(range(len(self.hidden))):
            d_z = activation_backward("relu", pre[i], d_h)
            d_h, g = affine_backward(inputs[i], self.hidden[i], d_z)
            hidden_grads.append(g)
        hidden_grads.reverse()
        grads = []
        for g in hidden_grads:
            grads += [g.W, g.b]
        return grads + [g_head.W, g_head.b]


def default_feature_names(p: int) -> list[str]:
    return [f"x{j + 1}" for j in range(p)]


def _input_scaling(stats: ColumnStats | None, p: int, standardize: bool) -> tuple[np.ndarray, np.ndarray]:
    if stats is None or not standardize:
        return np.zeros(p), np.ones(p)
    return stats.mean.copy(), stats.scale()


def build_csn(config: CsnConfig, training_stats: ColumnStats, feature_names: list[str] | None = None) -> CsnModel:
    """Initialize a CSN for the features summarized by training_stats
    Args:
        config (CsnConfig): architecture and training settings
        training_stats (ColumnStats): training-split column summary
        feature_names (list[str] | None): names for the p features
    Returns:
        CsnModel: freshly initialized model
    """
    p = training_stats.p
    names = list(feature_names) if feature_names is not None else default_feature_names(p)
    if len(names) != p:
        raise ConfigurationError(f"{len(names)} feature names for {p} features")
    mean, scale = _input_scaling(training_stats, p, config.standardize)
    basis_stats = training_stats.standardized() if config.standardize else training_stats

    rng = np.random.default_rng(config.seed)
    spline = init_bases(basis_stats, config.m, config.basis, seed=config.seed)
    width = config.basis.width(config.m, p)
    d = config.d
    model = CsnModel(
        config=config,
        spline=spline,
        projection=AffineParams(W=glorot_uniform(d, width, rng), b=np.zeros(d)),
        cross=[CrossParams(W=glorot_uniform(d, d, rng), b=np.zeros(d)) for _ in range(config.k)],
        head=AffineParams(W=glorot_uniform(1, d, rng), b=np.zeros(1)),
        feature_names=names,
        input_mean=mean,
        input_scale=scale,
    )
    logger.debug(f"built csn with {model.n_params} parameters ({model.n_trainable} trainable)")
    return model


def build_fcnn(config: FcnnConfig, p: int, training_stats: ColumnStats | None = None,
               feature_names: list[str] | None = None) -> FcnnModel:
    """Initialize the relu baseline network for p features"""
    if p < 1:
        raise ConfigurationError(f"fcnn needs p >= 1, got {p}")
    names = list(feature_names) if feature_names is not None else default_feature_names(p)
    mean, scale = _input_scaling(training_stats, p, config.standardize)
    rng = np.random.default_rng(config.seed)
    hidden, fan_in = [], p
    for width in config.widths:
        hidden.append(AffineParams(W=glorot_uniform(width, fan_in, rng), b=np.zeros(width)))
        fan_in = width
    return FcnnModel(
        config=config,
        hidden=hidden,
        head=AffineParams(W=glorot_uniform(1, fan_in, rng), b=np.zeros(1)),
        feature_names=names,
        input_mean=mean,
        input_scale=scale,
    )


def treenet2_config(p: int, head: str = "regression", seed: int = 0) -> CsnConfig:
    """The fixed TreeNet2 defaults: k=2, m=5, d=20, lr 0.02, 1% batches, decay 0.995"""
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    return CsnConfig(
        basis=BasisKind("sigmoid_trainable"), m=5, d=20, k=2, head=head,
        lr=0.02, batch_fraction=0.01, decay=0.995, patience=50, seed=seed,
    )


def predict(model: Model, X: np.ndarray) -> np.ndarray:
    """Raw scores for a regression head, probabilities for a binary head"""
    score, _ = model.forward(X)
    return expit(score) if model.binary else score


def default_loss(model: Model) -> str:
    return "logloss" if model.binary else "mse"


def loss_value(kind: str, y: np.ndarray, pred: np.ndarray) -> float:
    """Mean squared error or mean negative log-likelihood"""
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if kind == "mse":
        return float(np.mean((pred - y) ** 2))
    if kind == "logloss":
        prob = np.clip(pred, PROB_CLIP, 1.0 - PROB_CLIP)
        return float(-np.mean(y * np.log(prob) + (1.0 - y) * np.log1p(-prob)))
    raise ConfigurationError(f"unknown loss '{kind}', expected one of {LOSSES}")


def gradients(model: Model, batch: tuple[np.ndarray, np.ndarray], loss: str | None = None) -> np.ndarray:
    """Exact gradient of the mean batch loss w.r.t. the trainable parameters
    Args:
        model (Model): network
        batch (tuple): (X, y)
        loss (str | None): 'mse' or 'logloss', defaults to the head's loss
    Returns:
        np.ndarray: flat gradient, same layout as ``model.get_flat()``
    """
    X, y = batch
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] == 0:
        raise ConfigurationError("gradient batch is empty")
    loss = loss or default_loss(model)
    if loss == "logloss" and not model.binary:
        raise ConfigurationError("logloss needs a binary head")

    score, cache = model.forward(X)
    pred = expit(score) if model.binary else score
    value = loss_value(loss, y, pred)
    if not np.isfinite(value):
        bad = np.flatnonzero(~np.isfinite(pred))
        first = int(bad[0]) if bad.size else None
        raise NonFiniteError(
            f"non-finite {loss} on a batch of {y.shape[0]} rows (first non-finite prediction at row {first})",
            index=first,
        )

    n = y.shape[0]
    if loss == "logloss":
        d_score = (pred - y) / n
    else:
        d_score = 2.0 * (pred - y) / n
        if model.binary:
            d_score = d_score * pred * (1.0 - pred)

    grads = model.backward(cache, d_score)
    trainable = [g.ravel() for g, (_, _, t) in zip(grads, model.blocks()) if t]
    return np.concatenate(trainable) if trainable else np.zeros(0)


def _config_from_header(family: str, values: dict) -> CsnConfig | FcnnConfig:
    if family == "csn":
        return CsnConfig.from_dict(values)
    if family == "fcnn":
        return FcnnConfig.from_dict(values)
    raise ModelFormatError(f"unknown model family '{family}'")


def _allocate(config: CsnConfig | FcnnConfig, p: int, names: list[str],
              mean: np.ndarray, scale: np.ndarray) -> Model:
    """Zero-filled model with the right shapes, ready for set_flat"""
    if isinstance(config, FcnnConfig):
        hidden, fan_in = [], p
        for width in config.widths:
            hidden.append(AffineParams(W=np.zeros((width, fan_in)), b=np.zeros(width)))
            fan_in = width
        return FcnnModel(config=config, hidden=hidden, head=AffineParams(W=np.zeros((1, fan_in)), b=np.zeros(1)),
                         feature_names=names, input_mean=mean, input_scale=scale)

    basis, m, d = config.basis, config.m, config.d
    if basis.name == "identity":
        spline = SplineParams(alpha=np.zeros((p, 0)), beta=np.zeros((p, 0)))
    elif basis.name == "oblique_sigmoid":
        spline = SplineParams(alpha=np.zeros((basis.q, m)), beta=np.zeros((basis.q, m)), w=np.zeros((basis.q, p)))
    else:
        spline = SplineParams(alpha=np.zeros((p, m)), beta=np.zeros((p, m)))
    width = basis.width(m, p)
    return CsnModel(
        config=config,
        spline=spline,
        projection=AffineParams(W=np.zeros((d, width)), b=np.zeros(d)),
        cross=[CrossParams(W=np.zeros((d, d)), b=np.zeros(d)) for _ in range(config.k)],
        head=AffineParams(W=np.zeros((1, d)), b=np.zeros(1)),
        feature_names=names,
        input_mean=mean,
        input_scale=scale,
    )


def save_model(model: Model, path: str | Path, config_hash: str | None = None) -> Path:
    """Write a versioned .npz model file (JSON header plus parameter arrays)
    Args:
        model (Model): model to write
        path (str | Path): destination .npz file
        config_hash (str | None): hash of the experiment config that produced the model
    Returns:
        Path: the written file
    """
    path = Path(path)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": model.family,
        "cross_variant": CROSS_VARIANT if model.family == "csn" else None,
        "config": model.config.to_dict(),
        "n_features": model.p,
        "feature_names": list(model.feature_names),
        "blocks": [[name, list(array.shape)] for name, array, _ in model.blocks()],
        "tool_version": __version__,
        "config_hash": config_hash,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(json.dumps(header, sort_keys=True)),
            params=model.get_flat(trainable_only=False),
            input_mean=model.input_mean,
            input_scale=model.input_scale,
        )
    return path


def _read_archive(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            arrays = {key: np.array(data[key], dtype=np.float64)
                      for key in ("params", "input_mean", "input_scale")}
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as e:
        raise ModelFormatError(f"cannot read model file '{path}': {e}") from e
    return header, arrays


def model_header(path: str | Path) -> dict:
    """JSON header of a model file: format, config, tool version and config hash"""
    return _read_archive(Path(path))[0]


def load_model(path: str | Path) -> Model:
    """Read a model written by save_model
    Raises:
        ModelVersionError: format version is not supported
        ModelFormatError: file missing, truncated or not a model file
    """
    header, arrays = _read_archive(path)
    params, mean, scale = arrays["params"], arrays["input_mean"], arrays["input_scale"]
    if header.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"'{path}' is not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise ModelVersionError(
            f"'{path}' has format version {header.get('version')}, this tool reads version {FORMAT_VERSION}"
        )
    if header.get("family") == "csn" and header.get("cross_variant") != CROSS_VARIANT:
        raise ModelFormatError(f"'{path}' uses cross-layer variant {header.get('cross_variant')!r}")

    config = _config_from_header(header["family"], header["config"])
    model = _allocate(config, int(header["n_features"]), list(header["feature_names"]), mean, scale)
    if params.shape != (model.n_params,):
        raise ModelFormatError(f"'{path}' holds {params.size} parameters, expected {model.n_params}")
    model.set_flat(params, trainable_only=False)
    return model
