from .gradcheck import grad_check
from .layers import (
    attention_weights,
    cross_entropy,
    dropout,
    gru_cell,
    layer_norm,
    linear,
    multi_head_attention,
    softmax,
    typed_messages,
)
from .optim import AdamState, adam_step
from .tensor import ParamStore, PrngState, Tensor, add, concat, exp, log, matmul, mean, mul, relu, reshape, scale, sigmoid, sub, tanh, transpose, tsum

__all__ = [
    "AdamState", "ParamStore", "PrngState", "Tensor",
    "adam_step", "add", "attention_weights", "concat", "cross_entropy",
    "dropout", "exp", "grad_check", "gru_cell", "layer_norm", "linear",
    "log", "matmul", "mean", "mul", "multi_head_attention", "relu",
    "reshape", "scale", "sigmoid", "softmax", "sub", "tanh", "transpose",
    "tsum", "typed_messages",
]
