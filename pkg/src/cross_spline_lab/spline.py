"""Per-feature spline basis expansions and their data-driven initialization

Output columns are ordered feature-major, then basis index. Hinge bases emit
the pair (x - c)+, (c - x)+ for every knot, so their columns run
feature, knot, sign. Oblique bases replace features with projections.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from cross_spline_lab.errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

BASIS_NAMES = ("sigmoid_trainable", "sigmoid_fixed", "hinge", "identity", "oblique_sigmoid")


@dataclass(frozen=True)
class BasisKind:
    """Which spline transformation the first layer applies"""

    name: str = "sigmoid_trainable"
    slope: float = 20.0
    q: int = 1

    def __post_init__(self):
        if self.name not in BASIS_NAMES:
            raise ConfigurationError(f"unknown basis kind '{self.name}', expected one of {BASIS_NAMES}")
        if self.name == "sigmoid_fixed" and not self.slope > 0:
            raise ConfigurationError(f"sigmoid_fixed slope must be > 0, got {self.slope}")
        if self.name == "oblique_sigmoid" and self.q < 1:
            raise ConfigurationError(f"oblique_sigmoid needs q >= 1, got {self.q}")

    @classmethod
    def parse(cls, value: "str | dict | BasisKind") -> "BasisKind":
        """Build from a config value: a bare name or a mapping with 'kind'"""
        if isinstance(value, BasisKind):
            return value
        if isinstance(value, str):
            return cls(name=value)
        if isinstance(value, dict):
            options = dict(value)
            name = options.pop("kind", options.pop("name", "sigmoid_trainable"))
            unknown = set(options) - {"slope", "q"}
            if unknown:
                raise ConfigurationError(f"unknown basis options {sorted(unknown)}")
            return cls(name=name, **options)
        raise ConfigurationError(f"cannot read a basis kind from {value!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.name}
        if self.name == "sigmoid_fixed":
            out["slope"] = float(self.slope)
        if self.name == "oblique_sigmoid":
            out["q"] = int(self.q)
        return out

    def width(self, m: int, p: int) -> int:
        """Number of output columns for m bases over p features"""
        if self.name == "identity":
            return p
        if self.name == "hinge":
            return 2 * m * p
        if self.name == "oblique_sigmoid":
            return m * self.q
        return m * p

    @property
    def frozen_slopes(self) -> bool:
        return self.name in ("sigmoid_fixed", "hinge")


@dataclass
class SplineParams:
    """Intercepts and slopes, indexed [group, basis]

    Groups are input features, or projections for the oblique kind, in which
    case ``w`` (q, p) holds the projection directions.
    """

    alpha: np.ndarray
    beta: np.ndarray
    w: np.ndarray | None = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=np.float64)
        if self.alpha.shape != self.beta.shape:
            raise ConfigurationError(
                f"alpha {self.alpha.shape} and beta {self.beta.shape} must have the same shape"
            )

    @property
    def m(self) -> int:
        return self.alpha.shape[1]


@dataclass
class ColumnStats:
    """Training-split summary of every feature"""

    mean: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray
    sorted_values: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    @property
    def constant(self) -> np.ndarray:
        return (self.maximum - self.minimum) == 0

    def quantiles(self, levels: np.ndarray) -> np.ndarray:
        """Linear-interpolated order statistics, shape (len(levels), p)"""
        return np.quantile(self.sorted_values, levels, axis=0)

    def scale(self) -> np.ndarray:
        """Standard deviations with constant features mapped to 1"""
        return np.where(self.std > 0, self.std, 1.0)

    def standardized(self) -> "ColumnStats":
        """Stats of the training data after (x - mean) / scale"""
        scale = self.scale()
        return ColumnStats(
            mean=np.zeros_like(self.mean),
            std=np.where(self.std > 0, 1.0, 0.0),
            minimum=(self.minimum - self.mean) / scale,
            maximum=(self.maximum - self.mean) / scale,
            sorted_values=(self.sorted_values - self.mean) / scale,
        )


def column_stats(X: np.ndarray) -> ColumnStats:
    """Compute ColumnStats from a training matrix"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError(f"column stats need a non-empty 2-D matrix, got shape {X.shape}")
    std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    return ColumnStats(
        mean=X.mean(axis=0),
        std=std,
        minimum=X.min(axis=0),
        maximum=X.max(axis=0),
        sorted_values=np.sort(X, axis=0),
    )


def knot_levels(m: int) -> np.ndarray:
    """The m equally spaced interior quantile levels i / (m + 1)"""
    return np.arange(1, m + 1) / (m + 1)


def init_bases(stats: ColumnStats, m: int, kind: BasisKind, seed: int = 0) -> SplineParams:
    """Place knots at interior training quantiles and derive alpha, beta
    Args:
        stats (ColumnStats): training-split column summary
        m (int): bases per feature (knots per feature for hinge)
        kind (BasisKind): basis transformation
        seed (int): seed for the oblique projection directions
    Returns:
        SplineParams: initial parameters
    """
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    p = stats.p

    if kind.name == "identity":
        return SplineParams(alpha=np.zeros((p, 0)), beta=np.zeros((p, 0)))

    if kind.name == "oblique_sigmoid":
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(kind.q, p))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        # projections of independent standardized columns are close to normal
        center = w @ stats.mean
        spread = np.sqrt((w ** 2) @ (stats.std ** 2))
        spread = np.where(spread > 0, spread, 1.0)
        knots = center[:, None] + spread[:, None] * norm.ppf(knot_levels(m))[None, :]
        beta = np.repeat((2.0 / spread)[:, None], m, axis=1)
        return SplineParams(alpha=-beta * knots, beta=beta, w=w)

    knots = stats.quantiles(knot_levels(m)).T.copy()
    constant = stats.constant
    if constant.any():
        for j in np.flatnonzero(constant):
            logger.warning(f"feature {j} is constant; its bases are all centered at {stats.mean[j]:g}")
            knots[j, :] = stats.mean[j]

    if kind.name == "sigmoid_trainable":
        slope = np.where(stats.std > 0, 2.0 / np.where(stats.std > 0, stats.std, 1.0), 2.0)
        beta = np.repeat(slope[:, None], m, axis=1)
    elif kind.name == "sigmoid_fixed":
        beta = np.full((p, m), float(kind.slope))
    else:
        beta = np.ones((p, m))
    return SplineParams(alpha=-beta * knots, beta=beta)


def _pre_activation(X: np.ndarray, params: SplineParams, kind: BasisKind) -> tuple[np.ndarray, np.ndarray]:
    """Group inputs (features or projections) and Z = beta * u + alpha, shape (n, groups, m)"""
    U = X @ params.w.T if kind.name == "oblique_sigmoid" else X
    Z = U[:, :, None] * params.beta[None, :, :] + params.alpha[None, :, :]
    return U, Z


def _check_input(X: np.ndarray, params: SplineParams, kind: BasisKind) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigurationError(f"spline input must be 2-D, got shape {X.shape}")
    p = params.w.shape[1] if kind.name == "oblique_sigmoid" else params.alpha.shape[0]
    if X.shape[1] != p:
        raise ConfigurationError(f"spline input has {X.shape[1]} columns, parameters expect {p}")
    bad_rows = np.flatnonzero(~np.isfinite(X).all(axis=1))
    if bad_rows.size:
        raise DataError(f"non-finite input at row {bad_rows[0]}", rows=bad_rows.tolist())
    return X


def spline_forward(X: np.ndarray, params: SplineParams, kind: BasisKind) -> np.ndarray:
    """Expand X (n, p) into its basis matrix
    Args:
        X (np.ndarray): inputs
        params (SplineParams): basis parameters
        kind (BasisKind): basis transformation
    Returns:
        np.ndarray: (n, kind.width(m, p)) basis values
    """
    X = _check_input(X, params, kind)
    n = X.shape[0]
    if kind.name == "identity":
        return X.copy()
    _, Z = _pre_activation(X, params, kind)
    if kind.name == "hinge":
        pairs = np.stack([np.maximum(Z, 0.0), np.maximum(-Z, 0.0)], axis=-1)
        return pairs.reshape(n, -1)
    return expit(Z).reshape(n, -1)


def spline_backward(X: np.ndarray, params: SplineParams, kind: BasisKind,
                    dOut: np.ndarray) -> tuple[np.ndarray, SplineParams]:
    """Gradients of spline_forward for the inputs and every parameter block

    Frozen slopes still receive a gradient here; the model decides what trains.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if kind.name == "identity":
        return dOut.copy(), SplineParams(alpha=np.zeros_like(params.alpha), beta=np.zeros_like(params.beta))

    U, Z = _pre_activation(X, params, kind)
    if kind.name == "hinge":
        dA = dOut.reshape(n, Z.shape[1], Z.shape[2], 2)
        dZ = dA[..., 0] * (Z > 0) - dA[..., 1] * (Z < 0)
    else:
        A = expit(Z)
        dZ = dOut.reshape(Z.shape) * A * (1.0 - A)

    d_alpha = dZ.sum(axis=0)
    d_beta = (dZ * U[:, :, None]).sum(axis=0)
    dU = (dZ * params.beta[None, :, :]).sum(axis=2)
    if kind.name == "oblique_sigmoid":
        return dU @ params.w, SplineParams(alpha=d_alpha, beta=d_beta, w=dU.T @ X)
    return dU, SplineParams(alpha=d_alpha, beta=d_beta)
