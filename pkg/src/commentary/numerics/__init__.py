from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import NondeterministicLoss, grad_check, gradient_errors
from .layers import EPS_LOG, affine, cross_entropy, lstm_step
from .optim import AdamState, LrSchedule, adam_step, lr_at
from .params import ParamStore, init_uniform
from .tensor import (Tensor, absolute, add, as_tensor, backward, concat, detach, embed, getitem,
                     log, matmul, mul, neg, no_grad, reshape, sigmoid, softmax, stack, tanh, tsum)
