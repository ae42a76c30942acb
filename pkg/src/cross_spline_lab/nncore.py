"""Dense layer primitives with analytic backward rules and the ADAM update

Every matrix is a 2-D float64 numpy array with one row per observation.
Forward functions are pure; each has a ``*_backward`` companion that takes
the upstream gradient and returns gradients for the inputs and parameters.
"""

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.special import expit

from cross_spline_lab.errors import ConfigurationError, NonFiniteError


ActivationKind = Literal["sigmoid", "relu", "identity"]
ACTIVATIONS = ("sigmoid", "relu", "identity")


@dataclass
class AffineParams:
    """Weights of a dense layer: W is (out, in), b is (out,)"""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ConfigurationError(
                f"affine bias shape {self.b.shape} does not match weight shape {self.W.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass
class CrossParams:
    """Weights of one cross layer: square W_l (d, d) and b_l (d,)"""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        d = self.W.shape[0]
        if self.W.shape != (d, d) or self.b.shape != (d,):
            raise ConfigurationError(
                f"cross layer needs square W and matching b, got W {self.W.shape} and b {self.b.shape}"
            )

    @property
    def dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class AdamState:
    """Optimizer state; ``lr`` is the rate used by the next step

    ``base_lr`` and ``decay`` define the per-epoch schedule, see ``at_epoch``.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    base_lr: float = 0.02
    lr: float = 0.02
    decay: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int, base_lr: float = 0.02, decay: float = 1.0,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=np.zeros(size), v=np.zeros(size), t=0, base_lr=base_lr, lr=base_lr,
            decay=decay, beta1=beta1, beta2=beta2, eps=eps,
        )

    def at_epoch(self, epoch: int) -> "AdamState":
        """Return the state with lr set to base_lr * decay**epoch (epoch counted from 0)"""
        return replace(self, lr=self.base_lr * self.decay ** epoch)


def _check_matrix(X: np.ndarray, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    return X


def affine(X: np.ndarray, p: AffineParams) -> np.ndarray:
    """Row-wise W x + b
    Args:
        X (np.ndarray): input matrix (n, in)
        p (AffineParams): layer weights
    Returns:
        np.ndarray: output matrix (n, out)
    """
    X = _check_matrix(X, "affine input")
    if X.shape[1] != p.n_in:
        raise ConfigurationError(
            f"affine input has shape {X.shape} but weight matrix has shape {p.W.shape}"
        )
    return X @ p.W.T + p.b


def affine_backward(X: np.ndarray, p: AffineParams, dY: np.ndarray) -> tuple[np.ndarray, AffineParams]:
    """Gradients of an affine layer
    Returns:
        tuple[np.ndarray, AffineParams]: (dX, gradients packed as AffineParams)
    """
    dX = dY @ p.W
    return dX, AffineParams(W=dY.T @ X, b=dY.sum(axis=0))


def cross_layer(x0: np.ndarray, xl: np.ndarray, p: CrossParams) -> np.ndarray:
    """x_{l+1} = x0 * (W_l x_l + b_l) + x_l, row-wise with an elementwise product"""
    x0 = _check_matrix(x0, "cross x0")
    xl = _check_matrix(xl, "cross xl")
    if x0.shape != xl.shape or xl.shape[1] != p.dim:
        raise ConfigurationError(
            f"cross layer shapes disagree: x0 {x0.shape}, xl {xl.shape}, W {p.W.shape}"
        )
    return x0 * (xl @ p.W.T + p.b) + xl


def cross_layer_backward(x0: np.ndarray, xl: np.ndarray, p: CrossParams,
                         dY: np.ndarray) -> tuple[np.ndarray, np.ndarray, CrossParams]:
    """Gradients of a cross layer
    Returns:
        tuple: (dx0, dxl, gradients packed as CrossParams)
    """
    z = xl @ p.W.T + p.b
    dz = dY * x0
    dx0 = dY * z
    dxl = dY + dz @ p.W
    return dx0, dxl, CrossParams(W=dz.T @ xl, b=dz.sum(axis=0))


def activation(kind: ActivationKind, Z: np.ndarray) -> np.ndarray:
    """Elementwise sigmoid, relu or identity"""
    if kind == "sigmoid":
        return expit(Z)
    if kind == "relu":
        return np.maximum(Z, 0.0)
    if kind == "identity":
        return np.array(Z, dtype=np.float64, copy=True)
    raise ConfigurationError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")


def activation_backward(kind: ActivationKind, Z: np.ndarray, dA: np.ndarray) -> np.ndarray:
    """Gradient of the activation w.r.t. its pre-activation Z"""
    if kind == "sigmoid":
        A = expit(Z)
        return dA * A * (1.0 - A)
    if kind == "relu":
        return dA * (Z > 0)
    if kind == "identity":
        return dA
    raise ConfigurationError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")


def glorot_uniform(fan_out: int, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(-limit, limit) weights with limit = sqrt(6 / (fan_in + fan_out))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def adam_update(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM step at ``state.lr``
    Args:
        params (np.ndarray): flat parameter vector
        grads (np.ndarray): flat gradient, same length
        state (AdamState): moments and schedule, lr already set for the epoch
    Returns:
        tuple[np.ndarray, AdamState]: new parameters and new state
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ConfigurationError(
            f"adam sizes disagree: params {params.shape}, grads {grads.shape}, moments {state.m.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NonFiniteError(f"non-finite gradient at parameter index {bad[0]}", index=int(bad[0]))

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)
