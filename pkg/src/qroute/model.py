"""Actor-critic bundle, deterministic initialization, parameter accounting."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch
from torch import nn

from .critic import CriticNet
from .decoder import PointerDecoder
from .encoder import QgatEncoder
from .errors import ShapeError

_RDTYPE = torch.float64


class ActorCritic(nn.Module):
    """Shared encoder feeding the pointer decoder and the value head."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.encoder = QgatEncoder(cfg.encoder, cfg.qsim)
        self.decoder = PointerDecoder(cfg.encoder.d_x, cfg.decoder.heads,
                                      cfg.decoder.clip)
        self.critic = CriticNet(cfg.encoder.d_x, cfg.critic, cfg.qsim,
                                checkpoint=cfg.encoder.pqc_checkpoint)


def build_model(cfg):
    from .config import resolve_config

    return ActorCritic(resolve_config(cfg))


def classical_reference(cfg):
    """The same architecture with every quantum site replaced classically."""
    return dataclasses.replace(
        cfg,
        encoder=dataclasses.replace(cfg.encoder, variant="classical"),
        critic=dataclasses.replace(cfg.critic, quantum=False),
    )


def init_parameters(model, seed):
    """Deterministic initialization from a numpy stream, platform-independent.

    Rotation angles start uniform in [-pi, pi); matrices get Glorot-uniform
    fan scaling; biases start at zero, normalization scales at one; bare
    vectors (the attention g's) get 1/sqrt(n) uniform scaling. Parameters
    are visited in name order, so the same seed always produces the same
    model regardless of construction details.
    """
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, param in sorted(model.named_parameters()):
            shape = tuple(param.shape)
            if "thetas" in name:
                values = rng.uniform(-math.pi, math.pi, size=shape)
            elif param.ndim >= 2:
                fan_out = shape[0]
                fan_in = int(np.prod(shape[1:]))
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                values = rng.uniform(-limit, limit, size=shape)
            elif name.endswith(".bias"):
                values = np.zeros(shape)
            elif "norm" in name and name.endswith(".weight"):
                values = np.ones(shape)
            else:
                limit = 1.0 / math.sqrt(max(1, shape[0]))
                values = rng.uniform(-limit, limit, size=shape)
            param.copy_(torch.from_numpy(np.ascontiguousarray(values)).to(_RDTYPE))
    return model


def count_parameters(model):
    """(classical, quantum, total) trainable scalar counts.

    Quantum parameters are exactly the rotation angles; the projections
    around each circuit are classical by definition.
    """
    quantum = 0
    total = 0
    for name, param in model.named_parameters():
        total += param.numel()
        if "thetas" in name:
            quantum += param.numel()
    return total - quantum, quantum, total


def state_arrays(model):
    """state_dict as name -> float64 numpy array (parameters and buffers)."""
    out = {}
    for name, tensor in model.state_dict().items():
        out[name] = tensor.detach().cpu().numpy().astype(np.float64)
    return out


def load_state_arrays(model, arrays):
    """Load arrays produced by state_arrays back into the model."""
    state = model.state_dict()
    missing = sorted(set(state) - set(arrays))
    extra = sorted(set(arrays) - set(state))
    if missing or extra:
        raise ShapeError(
            f"checkpoint does not match the model (missing {missing[:3]}, "
            f"unexpected {extra[:3]})"
        )
    converted = {}
    for name, arr in arrays.items():
        want = tuple(state[name].shape)
        if tuple(arr.shape) != want:
            raise ShapeError(f"array {name} has shape {arr.shape}, model wants {want}")
        converted[name] = torch.from_numpy(np.ascontiguousarray(arr)).to(state[name].dtype)
    model.load_state_dict(converted)
    return model
