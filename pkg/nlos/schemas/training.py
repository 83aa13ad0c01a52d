"""
Training schemas: optimisation parameters and the linear inverse map
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from schemas.metrics import SsimWindow


class InitMode(str, Enum):
    """Starting point of Adam fine-tuning"""
    RIDGE = "ridge"
    ZEROS = "zeros"


class Modality(str, Enum):
    """Reconstruction input: event time-surfaces (E) or frame speckle (F)"""
    EVENTS = "E"
    FRAMES = "F"


class TrainConfig(BaseModel):
    """Loss weights and Adam / ridge parameters"""
    alpha: float = Field(default=1.0, ge=0.0, description="MSE weight")
    beta: float = Field(default=0.1, ge=0.0, description="(1 - SSIM) weight")
    lr: float = Field(default=1e-3, gt=0.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    epochs: int = Field(default=200, ge=0)
    ridge_lambda: float = Field(default=1e-2, ge=0.0)
    init: InitMode = InitMode.RIDGE
    ssim_window: SsimWindow = SsimWindow.GLOBAL
    seed: int = 0

    @model_validator(mode="after")
    def validate_weights(self):
        if self.alpha == 0.0 and self.beta == 0.0:
            raise ValueError('alpha and beta cannot both be zero')
        return self


@dataclass(eq=False)
class LinearReconstructor:
    """prediction = weights @ x + bias"""
    weights: np.ndarray
    bias: np.ndarray
    in_shape: Tuple[int, int]
    out_shape: Tuple[int, int]

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64).reshape(-1)
        self.in_shape = tuple(int(v) for v in self.in_shape)
        self.out_shape = tuple(int(v) for v in self.out_shape)
        if self.weights.shape != (self.out_dims, self.in_dims):
            raise ValueError(f"weights shape {self.weights.shape} != ({self.out_dims}, {self.in_dims})")
        if self.bias.shape != (self.out_dims,):
            raise ValueError(f"bias shape {self.bias.shape} != ({self.out_dims},)")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("weights and bias must be finite")

    @property
    def in_dims(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def out_dims(self) -> int:
        return int(np.prod(self.out_shape))

    @classmethod
    def zeros(cls, in_shape: Tuple[int, int], out_shape: Tuple[int, int]) -> "LinearReconstructor":
        in_dims, out_dims = int(np.prod(in_shape)), int(np.prod(out_shape))
        return cls(np.zeros((out_dims, in_dims)), np.zeros(out_dims), in_shape, out_shape)


class TrainingResult(BaseModel):
    """JSON sidecar of a trained model"""
    config: TrainConfig
    modality: Modality = Modality.EVENTS
    in_shape: Tuple[int, int]
    out_shape: Tuple[int, int]
    n_samples: int
    loss_trace: List[float] = []
    final_loss: float
