"""Deep slow feature analysis networks.

Two fully-connected streams map the first- and second-date pixels into a
feature space where the slow-feature trace loss

    loss = tr[(B^-1 A)^2],   A = cov(Xc - Yc),   B = (cov(Xc) + cov(Yc)) / 2 + r I

is small on unchanged pairs. The loss gradient with respect to the centered
features is analytic; it is chained through the centering step and the layers
by hand, and the streams are trained with plain full-batch gradient descent.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import Activation, TrainConfig
from .core import (
    DegenerateInputError,
    FloatArray,
    PixelMatrix,
    RasterFormatError,
    ShapeMismatchError,
    TrainingDivergenceError,
    as_pixel_matrix,
    require_same_shape,
)
from .geneig import cho_solve, cholesky, gen_eig
from .linear_sfa import SfaModel

logger = logging.getLogger(__name__)


def _sigmoid(z: FloatArray) -> FloatArray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# activation and its derivative written in terms of the activation's output
ACTIVATIONS: dict[Activation, tuple[Callable[[FloatArray], FloatArray], Callable[[FloatArray], FloatArray]]] = {
    Activation.TANH: (np.tanh, lambda a: 1.0 - a * a),
    Activation.SIGMOID: (_sigmoid, lambda a: a * (1.0 - a)),
}


class LayerParams(BaseModel):
    """Weights and bias of one affine layer."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: NDArray[np.float64] = Field(..., description="h_out x h_in weight matrix")
    bias: NDArray[np.float64] = Field(..., description="Length h_out bias vector")

    @field_validator("weights", "bias", mode="before")
    @classmethod
    def _finite_copy(cls, value: Any) -> NDArray[np.float64]:
        array = np.array(value, dtype=np.float64)
        if not np.isfinite(array).all():
            raise ValueError("layer parameters must be finite")
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> LayerParams:
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"weights {self.weights.shape} and bias {self.bias.shape} do not chain")
        return self

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])


class NetworkParams(BaseModel):
    """One stream: affine layers, each followed by the activation."""
    model_config = ConfigDict(frozen=True)

    layers: tuple[LayerParams, ...] = Field(..., min_length=1, description="Layers from input to output")
    activation: Activation = Field(Activation.TANH, description="Activation after every layer")

    @model_validator(mode="after")
    def _check_chain(self) -> NetworkParams:
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(f"layer {i} outputs {prev.out_dim} values but layer {i + 1} expects {nxt.in_dim}")
        return self

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim, *(layer.out_dim for layer in self.layers)]

    def step(self, grads: list[LayerParams], learning_rate: float) -> NetworkParams:
        """Parameters after one gradient-descent update."""
        return NetworkParams(
            layers=tuple(
                LayerParams(
                    weights=layer.weights - learning_rate * grad.weights,
                    bias=layer.bias - learning_rate * grad.bias,
                )
                for layer, grad in zip(self.layers, grads)
            ),
            activation=self.activation,
        )

    def __repr__(self) -> str:
        return f"NetworkParams(dims={self.dims}, activation={self.activation.value})"


class CovTriple(BaseModel):
    """Regularized feature covariances of both dates and of their difference."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sigma_xx: NDArray[np.float64] = Field(..., description="First-date covariance plus r I")
    sigma_yy: NDArray[np.float64] = Field(..., description="Second-date covariance plus r I")
    sigma_xy: NDArray[np.float64] = Field(..., description="Covariance of the feature difference")

    @property
    def a_matrix(self) -> FloatArray:
        return self.sigma_xy

    @property
    def b_matrix(self) -> FloatArray:
        return 0.5 * (self.sigma_xx + self.sigma_yy)


@dataclass
class ForwardCache:
    """Per-layer activations of one forward pass; ``activations[0]`` is the input."""

    activations: list[FloatArray]

    @property
    def output(self) -> FloatArray:
        return self.activations[-1]


def init_params(config: TrainConfig, input_dim: int) -> tuple[NetworkParams, NetworkParams]:
    """Glorot-uniform weights and zero biases for both streams.

    Both streams come from one generator seeded with ``config.seed``; the
    second stream is drawn after the first, so the two differ.
    """
    if input_dim < 1:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    dims = [input_dim, *config.hidden_sizes, config.resolved_out_dim(input_dim)]
    rng = np.random.default_rng(config.seed)

    def stream() -> NetworkParams:
        layers = []
        for h_in, h_out in zip(dims, dims[1:]):
            limit = np.sqrt(6.0 / (h_in + h_out))
            layers.append(LayerParams(weights=rng.uniform(-limit, limit, (h_out, h_in)), bias=np.zeros(h_out)))
        return NetworkParams(layers=tuple(layers), activation=config.activation)

    theta1 = stream()
    theta2 = stream()
    return theta1, theta2


def forward_cache(theta: NetworkParams, X: Any) -> ForwardCache:
    x = as_pixel_matrix(X, "X")
    if x.shape[0] != theta.input_dim:
        raise ShapeMismatchError(f"network expects {theta.input_dim} input bands, got {x.shape[0]}")
    activate, _ = ACTIVATIONS[theta.activation]
    activations = [x]
    for layer in theta.layers:
        activations.append(activate(layer.weights @ activations[-1] + layer.bias[:, None]))
    return ForwardCache(activations=activations)


def forward(theta: NetworkParams, X: Any) -> PixelMatrix:
    """Map a bands x n pixel matrix to o x n features."""
    return forward_cache(theta, X).output


def center(Xphi: Any) -> PixelMatrix:
    """Remove each feature's mean over the samples."""
    features = as_pixel_matrix(Xphi, "features")
    if features.shape[1] < 2:
        raise DegenerateInputError(f"centering needs at least 2 samples, got {features.shape[1]}")
    return features - features.mean(axis=1, keepdims=True)


def covariances(Xc: Any, Yc: Any, r: float) -> CovTriple:
    """Regularized covariances with 1/n scaling."""
    if not r > 0.0:
        raise ValueError(f"regularization r must be positive, got {r}")
    xc = as_pixel_matrix(Xc, "Xc")
    yc = as_pixel_matrix(Yc, "Yc")
    require_same_shape(xc, yc, "Xc and Yc")
    o, n = xc.shape
    diff = xc - yc
    ridge = r * np.eye(o)
    sigma_xx = xc @ xc.T / n + ridge
    sigma_yy = yc @ yc.T / n + ridge
    sigma_xy = diff @ diff.T / n
    return CovTriple(
        sigma_xx=(sigma_xx + sigma_xx.T) / 2.0,
        sigma_yy=(sigma_yy + sigma_yy.T) / 2.0,
        sigma_xy=(sigma_xy + sigma_xy.T) / 2.0,
    )


def _loss_parts(Xc: Any, Yc: Any, r: float) -> tuple[float, FloatArray, FloatArray, FloatArray]:
    """Loss, A, the Cholesky factor of B and B^-1 A."""
    cov = covariances(Xc, Yc, r)
    A = cov.a_matrix
    L = cholesky(cov.b_matrix)
    binv_a = cho_solve(L, A)
    return float(np.trace(binv_a @ binv_a)), A, L, binv_a


def dsfa_loss(Xc: Any, Yc: Any, r: float) -> float:
    """``tr[(B^-1 A)^2]``, the sum of squared generalized eigenvalues."""
    loss, *_ = _loss_parts(Xc, Yc, r)
    return max(loss, 0.0)


def loss_from_features(Xphi: Any, Yphi: Any, r: float) -> float:
    """Loss of raw (uncentered) stream outputs."""
    return dsfa_loss(center(Xphi), center(Yphi), r)


def loss_feature_grad(Xc: Any, Yc: Any, r: float) -> tuple[FloatArray, FloatArray]:
    """Gradient of the loss with respect to the centered features of each date."""
    xc = as_pixel_matrix(Xc, "Xc")
    yc = as_pixel_matrix(Yc, "Yc")
    _, _, L, binv_a = _loss_parts(xc, yc, r)
    n = xc.shape[1]

    binv_a_binv = cho_solve(L, binv_a.T).T
    grad_a = binv_a_binv + binv_a_binv.T
    grad_b = -(binv_a @ binv_a_binv + (binv_a @ binv_a_binv).T)

    diff = xc - yc
    gx = (2.0 / n) * (grad_a @ diff) + (1.0 / n) * (grad_b @ xc)
    gy = -(2.0 / n) * (grad_a @ diff) + (1.0 / n) * (grad_b @ yc)
    return gx, gy


def _backprop(theta: NetworkParams, cache: ForwardCache, grad_out: FloatArray) -> list[LayerParams]:
    _, derivative = ACTIVATIONS[theta.activation]
    grads: list[LayerParams] = []
    upstream = grad_out
    for index in range(len(theta.layers) - 1, -1, -1):
        delta = upstream * derivative(cache.activations[index + 1])
        grads.append(
            LayerParams(weights=delta @ cache.activations[index].T, bias=delta.sum(axis=1))
        )
        upstream = theta.layers[index].weights.T @ delta
    grads.reverse()
    return grads


def param_grads(
    theta1: NetworkParams, theta2: NetworkParams, X: Any, Y: Any, r: float
) -> tuple[list[LayerParams], list[LayerParams], float]:
    """Loss and its gradient with respect to every weight and bias of both streams."""
    x = as_pixel_matrix(X, "X")
    y = as_pixel_matrix(Y, "Y")
    require_same_shape(x, y)
    if theta1.output_dim != theta2.output_dim:
        raise ShapeMismatchError(f"stream outputs differ: {theta1.output_dim} vs {theta2.output_dim}")

    cache1 = forward_cache(theta1, x)
    cache2 = forward_cache(theta2, y)
    xc = center(cache1.output)
    yc = center(cache2.output)
    loss, *_ = _loss_parts(xc, yc, r)
    gx, gy = loss_feature_grad(xc, yc, r)

    # centering is a symmetric projection, so its adjoint removes the row mean again
    gx -= gx.mean(axis=1, keepdims=True)
    gy -= gy.mean(axis=1, keepdims=True)
    return _backprop(theta1, cache1, gx), _backprop(theta2, cache2, gy), loss


def train(Xs: Any, Ys: Any, config: TrainConfig) -> tuple[NetworkParams, NetworkParams, list[float]]:
    """Full-batch gradient descent on training pairs.

    Returns:
        Trained streams and the loss before each update

    Raises:
        TrainingDivergenceError: When the loss or an update stops being finite
    """
    xs = as_pixel_matrix(Xs, "Xs")
    ys = as_pixel_matrix(Ys, "Ys")
    require_same_shape(xs, ys, "training samples")
    theta1, theta2 = init_params(config, xs.shape[0])
    history: list[float] = []

    for epoch in range(config.max_epochs):
        grads1, grads2, loss = param_grads(theta1, theta2, xs, ys, config.reg_r)
        if not np.isfinite(loss):
            raise TrainingDivergenceError(epoch, loss)
        history.append(loss)
        if epoch % config.log_every == 0:
            logger.debug("epoch %d/%d: loss %.6g", epoch, config.max_epochs, loss)
        try:
            theta1 = theta1.step(grads1, config.learning_rate)
            theta2 = theta2.step(grads2, config.learning_rate)
        except ValueError as e:
            raise TrainingDivergenceError(epoch, float("nan")) from e

    if history:
        logger.info(
            "Trained %s for %d epochs: loss %.6g -> %.6g",
            config.architecture, config.max_epochs, history[0], history[-1],
        )
    return theta1, theta2, history


def fit_feature_sfa(Xc: Any, Yc: Any, r: float) -> SfaModel:
    """SFA on centered features with the regularized feature covariances."""
    cov = covariances(Xc, Yc, r)
    B = cov.b_matrix
    result = gen_eig(cov.a_matrix, B)
    W = result.eigenvectors
    w_hat = W / np.sqrt(np.einsum("ij,ik,kj->j", W, B, W))
    return SfaModel(w_hat=w_hat, eigenvalues=result.eigenvalues)


def project_dsfa(
    theta1: NetworkParams, theta2: NetworkParams, X: Any, Y: Any, r: float = 1e-4
) -> PixelMatrix:
    """Slow-feature difference of the full scene's mapped features (o x n)."""
    xc = center(forward(theta1, X))
    yc = center(forward(theta2, Y))
    model = fit_feature_sfa(xc, yc, r)
    return model.w_hat.T @ xc - model.w_hat.T @ yc


def save_params(
    theta: NetworkParams,
    path: str | Path,
    *,
    seed: int | None = None,
    epoch: int | None = None,
) -> Path:
    """Write a JSON manifest and a little-endian float64 payload.

    The payload holds each layer's weights (row-major) followed by its bias.
    Returns the manifest path.
    """
    manifest_path = Path(path).with_suffix(".json")
    payload_path = manifest_path.with_suffix(".bin")
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dims": theta.dims,
        "activation": theta.activation.value,
        "seed": seed,
        "epoch": epoch,
        "dtype": "f64",
    }
    chunks = [np.concatenate([layer.weights.reshape(-1), layer.bias]) for layer in theta.layers]
    payload_path.write_bytes(np.concatenate(chunks).astype("<f8").tobytes())
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def load_params(path: str | Path) -> NetworkParams:
    """Read a checkpoint written by :func:`save_params`."""
    manifest_path = Path(path).with_suffix(".json")
    payload_path = manifest_path.with_suffix(".bin")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        dims = [int(d) for d in manifest["dims"]]
        activation = Activation(manifest["activation"])
    except (OSError, KeyError, ValueError, TypeError) as e:
        raise RasterFormatError(f"invalid parameter manifest {manifest_path}: {e}") from e

    values = np.frombuffer(payload_path.read_bytes(), dtype="<f8").astype(np.float64)
    expected = sum(h_out * h_in + h_out for h_in, h_out in zip(dims, dims[1:]))
    if values.size != expected:
        raise RasterFormatError(f"payload {payload_path} has {values.size} values, manifest expects {expected}")

    layers = []
    offset = 0
    for h_in, h_out in zip(dims, dims[1:]):
        weights = values[offset : offset + h_out * h_in].reshape(h_out, h_in)
        offset += h_out * h_in
        bias = values[offset : offset + h_out]
        offset += h_out
        layers.append(LayerParams(weights=weights, bias=bias))
    return NetworkParams(layers=tuple(layers), activation=activation)
