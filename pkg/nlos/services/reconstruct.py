"""
Inverse models: regularized deconvolution and the trained linear reconstructor
"""

import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.signal import convolve2d

from core.exceptions import (
    BadMagic,
    BadVersion,
    DimMismatch,
    NonFiniteLoss,
    SingularKernel,
    SingularSystem,
    ValidationError,
)
from core.logging_config import get_logger
from schemas.features import FeatureFrame
from schemas.metrics import SsimConfig, SsimWindow
from schemas.scene import WallFrame
from schemas.training import InitMode, LinearReconstructor, TrainConfig, TrainingResult
from services.metrics import mse, ssim_terms
from services.storage import ArtifactStorage, ModelStorage

logger = get_logger("reconstruct")

RIDGE_RESIDUAL_TOLERANCE = 1e-10
MODEL_MAGIC = b"NLRW"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sBHH")


# --- physics inverse --------------------------------------------------------

def _next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


def wiener_deconvolve(wall: Union[WallFrame, np.ndarray], kernel: np.ndarray, lam: float,
                      footprint: Optional[Tuple[slice, slice]] = None) -> np.ndarray:
    """Regularized inverse filter conj(H) W / (|H|^2 + lam), lam relative to the kernel DC gain"""
    image = wall.image if isinstance(wall, WallFrame) else np.asarray(wall, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if image.shape != kernel.shape or image.ndim != 2:
        raise DimMismatch(f"Wall {image.shape} and kernel {kernel.shape} must share one 2-D grid",
                          {"wall": list(image.shape), "kernel": list(kernel.shape)})
    if lam < 0:
        raise ValidationError(f"lambda must be nonnegative, got {lam}", field="lam")

    rows, cols = image.shape
    scale = float(kernel.sum())
    if scale == 0.0:
        if lam == 0.0:
            raise SingularKernel()
        estimate = np.zeros_like(image)
    else:
        size = (_next_pow2(rows), _next_pow2(cols))
        padded_kernel = np.zeros(size)
        padded_kernel[:rows, :cols] = kernel / scale
        # kernel centre (index N//2) to the origin
        padded_kernel = np.roll(padded_kernel, (-(rows // 2), -(cols // 2)), axis=(0, 1))
        padded_wall = np.zeros(size)
        padded_wall[:rows, :cols] = image / scale

        h = np.fft.fft2(padded_kernel)
        w = np.fft.fft2(padded_wall)
        power = np.abs(h) ** 2
        if lam == 0.0 and np.any(np.abs(h) <= 1e-12 * np.abs(h).max()):
            raise SingularKernel()
        estimate = np.fft.ifft2(np.conj(h) * w / (power + lam)).real[:rows, :cols]

    if footprint is not None:
        estimate = estimate[footprint]
    return np.clip(estimate, 0.0, None)


# --- loss -------------------------------------------------------------------

def _check_pair(pred: np.ndarray, gt: np.ndarray):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimMismatch(f"Prediction {pred.shape} and ground truth {gt.shape} differ",
                          {"pred": list(pred.shape), "gt": list(gt.shape)})
    return pred, gt


def composite_loss(pred: np.ndarray, gt: np.ndarray, alpha: float, beta: float,
                   ssim_config: Optional[SsimConfig] = None) -> float:
    """alpha * MSE + beta * (1 - SSIM)"""
    pred, gt = _check_pair(pred, gt)
    loss = alpha * mse(pred, gt) if alpha else 0.0
    if beta:
        loss += beta * (1.0 - ssim_terms(pred, gt, ssim_config or SsimConfig()).value)
    return float(loss)


def ssim_gradient(a: np.ndarray, b: np.ndarray, config: SsimConfig = SsimConfig()) -> np.ndarray:
    """d SSIM(a, b) / d a"""
    terms = ssim_terms(a, b, config)
    s = terms.map

    if terms.window is None:
        n = a.size
        d_a1 = 2.0 * terms.mu_b / n
        d_a2 = 2.0 * (b - terms.mu_b) / n
        d_b1 = 2.0 * terms.mu_a / n
        d_b2 = 2.0 * (a - terms.mu_a) / n
        return s * (d_a1 / terms.a1 + d_a2 / terms.a2 - d_b1 / terms.b1 - d_b2 / terms.b2)

    # windowed: chain rule through the valid correlation, whose adjoint is a full convolution
    d1 = s * (2.0 * terms.mu_b / terms.a1 - 2.0 * terms.mu_b / terms.a2
              - 2.0 * terms.mu_a / terms.b1 + 2.0 * terms.mu_a / terms.b2)
    d2 = 2.0 * s / terms.a2
    d3 = -s / terms.b2
    g = terms.window

    def spread(d):
        return convolve2d(d, g, mode="full")

    return (spread(d1) + b * spread(d2) + 2.0 * a * spread(d3)) / s.size


def loss_gradient(pred: np.ndarray, gt: np.ndarray, alpha: float, beta: float,
                  ssim_config: Optional[SsimConfig] = None) -> np.ndarray:
    """Analytic d composite_loss / d pred"""
    pred, gt = _check_pair(pred, gt)
    grad = alpha * 2.0 * (pred - gt) / pred.size
    if beta:
        grad = grad - beta * ssim_gradient(pred, gt, ssim_config or SsimConfig())
    return grad


def _batch_loss(pred: np.ndarray, gt: np.ndarray, config: TrainConfig, ssim_config: SsimConfig,
                out_shape: Tuple[int, int]) -> Tuple[float, np.ndarray]:
    """Mean composite loss over rows and its gradient w.r.t. every prediction row"""
    n_samples, dims = pred.shape
    diff = pred - gt
    loss = config.alpha * np.mean(diff ** 2, axis=1)
    grad = config.alpha * 2.0 * diff / dims

    if config.beta and ssim_config.window == SsimWindow.GLOBAL:
        mu_a = pred.mean(axis=1, keepdims=True)
        mu_b = gt.mean(axis=1, keepdims=True)
        da, db = pred - mu_a, gt - mu_b
        var_a = np.mean(da ** 2, axis=1, keepdims=True)
        var_b = np.mean(db ** 2, axis=1, keepdims=True)
        cov = np.mean(da * db, axis=1, keepdims=True)
        a1 = 2.0 * mu_a * mu_b + ssim_config.c1
        a2 = 2.0 * cov + ssim_config.c2
        b1 = mu_a ** 2 + mu_b ** 2 + ssim_config.c1
        b2 = var_a + var_b + ssim_config.c2
        s = (a1 * a2) / (b1 * b2)
        d_s = s * (2.0 * mu_b / a1 + 2.0 * db / a2 - 2.0 * mu_a / b1 - 2.0 * da / b2) / dims
        loss = loss + config.beta * (1.0 - s[:, 0])
        grad = grad - config.beta * d_s
    elif config.beta:
        for i in range(n_samples):
            a = pred[i].reshape(out_shape)
            b = gt[i].reshape(out_shape)
            loss[i] += config.beta * (1.0 - ssim_terms(a, b, ssim_config).value)
            grad[i] -= config.beta * ssim_gradient(a, b, ssim_config).reshape(-1)

    return float(np.mean(loss)), grad / n_samples


# --- ridge ------------------------------------------------------------------

def _as_design(features: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    x = x.reshape(x.shape[0], -1) if x.ndim > 2 else x
    y = y.reshape(y.shape[0], -1) if y.ndim > 2 else y
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimMismatch(f"Design {x.shape} and targets {y.shape} do not pair up",
                          {"features": list(x.shape), "targets": list(y.shape)})
    if x.shape[0] == 0:
        raise ValidationError("At least one sample is required", field="features")
    return x, y


def _spd_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with one step of iterative refinement"""
    try:
        factor = cho_factor(matrix, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SingularSystem(f"Normal equations are not positive definite: {e}")
    solution = cho_solve(factor, rhs, check_finite=False)
    return solution + cho_solve(factor, rhs - matrix @ solution, check_finite=False)


def ridge_residual(model: LinearReconstructor, features: np.ndarray, targets: np.ndarray, lam: float) -> float:
    """Relative residual of the ridge normal equations (bias unpenalised)"""
    x, y = _as_design(features, targets)
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    w = model.weights.T
    rhs = xc.T @ yc
    residual = xc.T @ (xc @ w) + lam * w - rhs
    norm = np.linalg.norm(rhs)
    return float(np.linalg.norm(residual) / norm) if norm > 0 else float(np.linalg.norm(residual))


def fit_ridge(features: np.ndarray, targets: np.ndarray, lam: float,
              in_shape: Optional[Tuple[int, int]] = None,
              out_shape: Optional[Tuple[int, int]] = None) -> LinearReconstructor:
    """Closed-form ridge regression with an unpenalised bias"""
    x, y = _as_design(features, targets)
    if lam < 0:
        raise ValidationError(f"lambda must be nonnegative, got {lam}", field="lam")
    n_samples, in_dims = x.shape
    out_dims = y.shape[1]

    if lam == 0.0:
        augmented = np.hstack([x, np.ones((n_samples, 1))])
        if np.linalg.matrix_rank(augmented) < in_dims + 1:
            raise SingularSystem()

    # centring is the unpenalised constant column
    x_mean, y_mean = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - x_mean, y - y_mean

    if n_samples <= in_dims:
        gram = xc @ xc.T + lam * np.eye(n_samples)
        w = xc.T @ _spd_solve(gram, yc)
    else:
        w = _spd_solve(xc.T @ xc + lam * np.eye(in_dims), xc.T @ yc)

    model = LinearReconstructor(
        weights=w.T,
        bias=y_mean - x_mean @ w,
        in_shape=in_shape or (in_dims, 1),
        out_shape=out_shape or (out_dims, 1),
    )

    residual = ridge_residual(model, x, y, lam)
    if residual >= RIDGE_RESIDUAL_TOLERANCE:
        logger.warning(f"Ridge normal-equation residual {residual:.2e} above {RIDGE_RESIDUAL_TOLERANCE:.0e}")
    logger.debug(f"Ridge fit on {n_samples} samples, {in_dims} -> {out_dims}, lambda={lam}")
    return model


# --- Adam -------------------------------------------------------------------

class AdamOptimizer:
    """Adam with bias-corrected first and second moments over a dict of arrays"""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "AdamOptimizer":
        return cls(config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update params in place"""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for k in params:
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])

            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)

            denom = np.sqrt(self.v[k] / bc2) + self.epsilon
            params[k] -= step_size * self.m[k] / denom


def train_adam(features: np.ndarray, targets: np.ndarray, config: TrainConfig,
               in_shape: Tuple[int, int], out_shape: Tuple[int, int],
               ssim_config: Optional[SsimConfig] = None) -> Tuple[LinearReconstructor, List[float]]:
    """Full-batch Adam on the composite loss; trace[e] is the loss at the start of epoch e"""
    x, y = _as_design(features, targets)
    in_dims, out_dims = int(np.prod(in_shape)), int(np.prod(out_shape))
    if x.shape[1] != in_dims or y.shape[1] != out_dims:
        raise DimMismatch(f"Expected {in_dims} -> {out_dims} dims, got {x.shape[1]} -> {y.shape[1]}",
                          {"in_dims": in_dims, "out_dims": out_dims})
    ssim_config = ssim_config or SsimConfig(window=config.ssim_window)

    if config.init == InitMode.RIDGE:
        start = fit_ridge(x, y, config.ridge_lambda, in_shape, out_shape)
    else:
        start = LinearReconstructor.zeros(in_shape, out_shape)
    params = {"weights": start.weights.copy(), "bias": start.bias.copy()}
    optimizer = AdamOptimizer.from_config(config)

    trace: List[float] = []
    for epoch in range(config.epochs):
        pred = x @ params["weights"].T + params["bias"]
        loss, grad = _batch_loss(pred, y, config, ssim_config, tuple(out_shape))
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch)
        trace.append(loss)
        optimizer.step(params, {"weights": grad.T @ x, "bias": grad.sum(axis=0)})

    if not (np.all(np.isfinite(params["weights"])) and np.all(np.isfinite(params["bias"]))):
        raise NonFiniteLoss(config.epochs)

    model = LinearReconstructor(params["weights"], params["bias"], in_shape, out_shape)
    if trace:
        logger.info(f"Adam: {config.epochs} epochs, loss {trace[0]:.6f} -> {trace[-1]:.6f}")
    return model, trace


def predict(model: LinearReconstructor, feature: Union[FeatureFrame, np.ndarray]) -> np.ndarray:
    """clip(W x + b, 0, 1) shaped like the target"""
    x = feature.image if isinstance(feature, FeatureFrame) else np.asarray(feature, dtype=np.float64)
    x = x.reshape(-1)
    if x.size != model.in_dims:
        raise DimMismatch(f"Feature has {x.size} values, model expects {model.in_dims}",
                          {"found": int(x.size), "expected": model.in_dims})
    return np.clip(model.weights @ x + model.bias, 0.0, 1.0).reshape(model.out_shape)


# --- persistence ------------------------------------------------------------

def encode_model(model: LinearReconstructor) -> bytes:
    """NLRW blob: header, row-major float64 weights, float64 bias"""
    if model.in_dims > 0xFFFF or model.out_dims > 0xFFFF:
        raise ValidationError("Model dims exceed the 16-bit header fields", field="model")
    header = MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.in_dims, model.out_dims)
    return header + model.weights.astype("<f8").tobytes() + model.bias.astype("<f8").tobytes()


def decode_model(data: bytes, in_shape: Optional[Tuple[int, int]] = None,
                 out_shape: Optional[Tuple[int, int]] = None) -> LinearReconstructor:
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise BadMagic(bytes(data[:4]))
    if len(data) < MODEL_HEADER.size:
        raise ValidationError("Model header is truncated", field="model")
    _, version, in_dims, out_dims = MODEL_HEADER.unpack_from(data, 0)
    if version != MODEL_VERSION:
        raise BadVersion(version)

    expected = MODEL_HEADER.size + 8 * (out_dims * in_dims + out_dims)
    if len(data) != expected:
        raise ValidationError(f"Model blob has {len(data)} bytes, expected {expected}", field="model")

    values = np.frombuffer(data, dtype="<f8", offset=MODEL_HEADER.size).astype(np.float64)
    weights = values[:out_dims * in_dims].reshape(out_dims, in_dims)
    bias = values[out_dims * in_dims:]

    def square(n: int) -> Tuple[int, int]:
        side = int(round(np.sqrt(n)))
        return (side, side) if side * side == n else (n, 1)

    return LinearReconstructor(weights, bias, in_shape or square(in_dims), out_shape or square(out_dims))


def save_model(path: Union[str, Path], model: LinearReconstructor,
               result: Optional[TrainingResult] = None) -> Path:
    """Write `<name>.nlrw` and, when given, the `<name>.json` sidecar"""
    path = Path(path)
    models = ModelStorage(ArtifactStorage(path.parent), collection="")
    return models.save_model(path.stem, encode_model(model), result)


def load_model(path: Union[str, Path]) -> Tuple[LinearReconstructor, Optional[TrainingResult]]:
    """Read a model; shapes come from the sidecar when present"""
    path = Path(path)
    models = ModelStorage(ArtifactStorage(path.parent), collection="")
    blob = models.storage.load_bytes("", path.name)
    result = models.load_result(path.stem)
    if result is None:
        return decode_model(blob), None
    return decode_model(blob, result.in_shape, result.out_shape), result
