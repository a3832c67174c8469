from .autograd import Tensor, no_grad, parameter
from .layers import GATLayer, LayerNorm, Linear, Module, ResPBlock, TNet, aggregate_face
from .losses import cls_loss, total_loss, treg_loss
from .model import ModelConfig, NonFiniteError, SegmentationModel, forward
from .optim import Adam, step_decay_lr
from .gradcheck import GradCheckReport, grad_check, layer_grad_check

__all__ = [
    "Adam",
    "GATLayer",
    "GradCheckReport",
    "LayerNorm",
    "Linear",
    "Module",
    "ModelConfig",
    "NonFiniteError",
    "ResPBlock",
    "SegmentationModel",
    "TNet",
    "Tensor",
    "aggregate_face",
    "cls_loss",
    "forward",
    "grad_check",
    "layer_grad_check",
    "no_grad",
    "parameter",
    "step_decay_lr",
    "total_loss",
    "treg_loss",
]
