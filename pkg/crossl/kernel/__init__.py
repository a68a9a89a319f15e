"""Deterministic float64 tensor kernel with reverse-mode gradients and Adam."""

from crossl.kernel.gradcheck import gradient_check, relative_error
from crossl.kernel.ops import (
    add,
    as_tensor,
    conv1d,
    dense,
    flatten,
    global_mean_pool,
    mask_multiply,
    relu,
    scale,
    softmax,
    softmax_cross_entropy,
    stack,
    sum_all,
)
from crossl.kernel.optim import AdamState, adam_step
from crossl.kernel.rng import Rng
from crossl.kernel.tensor import Parameter, Tensor, backward
