from . import checkpoint
from .gradcheck import GradCheckResult, check_gradients, numeric_grad, relative_error
from .optim import ParameterStore, ScheduleConfig, adamw_step, lr_at
from .tensor import NonFiniteError, Tensor, backward, forward_backward, no_grad, trace_ops

__all__ = [
    "GradCheckResult",
    "NonFiniteError",
    "ParameterStore",
    "ScheduleConfig",
    "Tensor",
    "adamw_step",
    "backward",
    "check_gradients",
    "checkpoint",
    "forward_backward",
    "lr_at",
    "no_grad",
    "numeric_grad",
    "relative_error",
    "trace_ops",
]
