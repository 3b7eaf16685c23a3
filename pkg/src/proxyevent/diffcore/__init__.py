from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .optim import Adam, AdamState, adam_step
from .tensor import (
    LOG_FLOOR,
    DimensionError,
    Tape,
    Tensor,
    add,
    backward,
    binary_cross_entropy,
    broadcast_to,
    concat,
    cross_entropy,
    exp,
    gelu,
    get_tape,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg_log,
    no_grad,
    reset_tape,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    take,
    transpose,
    tsum,
    zero_grad,
)
from .gradcheck import check_gradients, max_relative_error, numeric_grad
