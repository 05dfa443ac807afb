"""State-value head: per-node readout stack, 1-D convolution, scalar value.

The readout layers are QnnTransform blocks in the quantum variant or
affine+ReLU layers classically, applied per node on the shared encoder
output. A convolution over the node axis (width 1 by default, which
makes the value invariant to customer order) is mean-reduced and mapped
to one real number per instance.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ShapeError
from .qsim import QnnTransform

_RDTYPE = torch.float64


class CriticNet(nn.Module):
    def __init__(self, d_x, cfg, qsim_cfg, checkpoint=True):
        super().__init__()
        self.d_x = d_x
        self.conv_width = cfg.conv_width
        layers = []
        for _ in range(cfg.readout_layers):
            if cfg.quantum:
                layers.append(QnnTransform(d_x, d_x, 1, qsim_cfg.n_qubits,
                                           qsim_cfg.n_layers, checkpoint=checkpoint))
            else:
                layers.append(nn.Sequential(nn.Linear(d_x, d_x, dtype=_RDTYPE),
                                            nn.ReLU()))
        self.readout = nn.ModuleList(layers)
        self.conv = nn.Conv1d(d_x, cfg.conv_channels, cfg.conv_width, dtype=_RDTYPE)
        self.head = nn.Linear(cfg.conv_channels, 1, dtype=_RDTYPE)

    def forward(self, embeddings):
        """Value per instance, shape (B,).

        Accepts an Embeddings bundle or the raw (B, m+1, d_x) node tensor.
        """
        nodes = getattr(embeddings, "node_embeddings", embeddings)
        if nodes.ndim != 3 or nodes.shape[-1] != self.d_x:
            raise ShapeError(f"expected (B, nodes, {self.d_x}), got {tuple(nodes.shape)}")
        if nodes.shape[1] < self.conv_width:
            raise ShapeError(
                f"{nodes.shape[1]} nodes is fewer than the convolution width "
                f"{self.conv_width}"
            )
        h = nodes
        for layer in self.readout:
            h = layer(h)
        y = self.conv(h.transpose(1, 2))  # (B, channels, nodes - width + 1)
        return self.head(y.mean(dim=-1)).squeeze(-1)
