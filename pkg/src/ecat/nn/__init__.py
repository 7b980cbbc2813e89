from . import functional
from .gradcheck import GradReport, check_scalar_fn, gradient_check
from .module import Module
from .tensor import Parameter, Tensor, assert_finite, no_grad, tensor

__all__ = [
    "functional",
    "Tensor",
    "Parameter",
    "Module",
    "tensor",
    "no_grad",
    "assert_finite",
    "gradient_check",
    "check_scalar_fn",
    "GradReport",
]
