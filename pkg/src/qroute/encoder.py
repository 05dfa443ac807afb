"""Edge-aware graph-attention encoder with swappable inner transforms.

Nodes carry (x, y, demand/C) and every ordered node pair carries its
Euclidean distance. Both are mapped to d_x-wide embeddings by affine maps
plus batch normalization. Each attention layer scores the pair (i, j)
from [x_i || x_j || e_ij], softmax-normalizes scores over j (self edge
included), and adds the attention-weighted sum of transformed neighbor
embeddings back onto x_i. The graph embedding is the node mean.

The score transform and the neighbor (value) transform are either plain
affine maps or QnnTransform blocks, switchable per site, which is the
whole point: the quantum variant swaps those inner maps for circuits
without touching the surrounding wiring.

Scores collapse algebraically: the attention vector g only ever sees the
transform output through a dot product, so the forward pass contracts g
into the transform's output weights instead of materializing the
(m+1)^2 x d_x score tensor. Tests compare against the uncontracted form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .core import distance_matrix
from .errors import NumericalError, ShapeError
from .qsim import QnnTransform

_RDTYPE = torch.float64
LEAKY_SLOPE = 0.2


class FeatureNorm(nn.Module):
    """Batch normalization over all leading axes, one statistic per feature.

    Training mode normalizes by batch moments and needs at least 2 rows;
    inference mode uses the running statistics (momentum 0.1). The two
    paths are requested explicitly per call so callers control exactly
    when statistics move.
    """

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        super().__init__()
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim, dtype=_RDTYPE))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=_RDTYPE))
        self.register_buffer("running_mean", torch.zeros(dim, dtype=_RDTYPE))
        self.register_buffer("running_var", torch.ones(dim, dtype=_RDTYPE))

    def forward(self, x, use_batch_stats=False, update_running=False):
        if x.shape[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} features, got {x.shape[-1]}")
        rows = x.reshape(-1, self.dim)
        if use_batch_stats:
            n = rows.shape[0]
            if n < 2:
                raise ShapeError(
                    "batch statistics need at least 2 rows; "
                    "use inference mode for single rows"
                )
            mean = rows.mean(dim=0)
            var = rows.var(dim=0, unbiased=False)
            if update_running:
                with torch.no_grad():
                    unbiased = var.detach() * n / (n - 1)
                    self.running_mean.mul_(1 - self.momentum).add_(
                        self.momentum * mean.detach())
                    self.running_var.mul_(1 - self.momentum).add_(
                        self.momentum * unbiased)
        else:
            mean = self.running_mean
            var = self.running_var
        return self.weight * (x - mean) / torch.sqrt(var + self.eps) + self.bias


@dataclass
class Embeddings:
    """Encoder output for a batch: per-node, per-edge, and pooled vectors."""

    node_embeddings: torch.Tensor  # (B, m+1, d_x)
    edge_embeddings: torch.Tensor  # (B, m+1, m+1, d_x)
    graph_embedding: torch.Tensor  # (B, d_x)


def instance_features(instances):
    """Raw model inputs for a batch of same-size instances.

    Returns (node_features, edge_features): (B, m+1, 3) with rows
    (x, y, demand/C), and (B, m+1, m+1, 1) distances.
    """
    sizes = {inst.n_nodes for inst in instances}
    if len(sizes) != 1:
        raise ShapeError(f"instances in one batch must share a size, got {sorted(sizes)}")
    feats = []
    efeats = []
    for inst in instances:
        f = np.zeros((inst.n_nodes, 3), dtype=np.float64)
        f[:, :2] = np.asarray(inst.coords)
        f[1:, 2] = np.asarray(inst.demands[1:], dtype=np.float64) / inst.capacity
        feats.append(f)
        efeats.append(distance_matrix(inst)[:, :, None])
    return (torch.from_numpy(np.stack(feats)), torch.from_numpy(np.stack(efeats)))


class _EncoderLayer(nn.Module):
    """One attention layer: score transform, attention vector g, value transform."""

    def __init__(self, d_x, score_dim, quantum_score, quantum_value,
                 score_blocks, value_blocks, qsim_cfg, checkpoint):
        super().__init__()
        if quantum_score:
            self.score = QnnTransform(3 * d_x, score_dim, score_blocks,
                                      qsim_cfg.n_qubits, qsim_cfg.n_layers,
                                      checkpoint=checkpoint)
        else:
            self.score = nn.Linear(3 * d_x, score_dim, dtype=_RDTYPE)
        self.g = nn.Parameter(torch.zeros(score_dim, dtype=_RDTYPE))
        if quantum_value:
            self.value = QnnTransform(d_x, d_x, value_blocks,
                                      qsim_cfg.n_qubits, qsim_cfg.n_layers,
                                      checkpoint=checkpoint)
        else:
            self.value = nn.Linear(d_x, d_x, bias=False, dtype=_RDTYPE)


def _split_pair_matmul(weight, bias, x, e):
    """(i, j)-pair affine map without materializing the concatenation.

    weight maps [x_i || x_j || e_ij] (width 3d) to some output width; the
    result is computed as three broadcast matmuls, shape (B, M, M, out).
    """
    d = x.shape[-1]
    w_i, w_j, w_e = weight[:, :d], weight[:, d:2 * d], weight[:, 2 * d:]
    part_i = x @ w_i.T  # (B, M, out)
    part_j = x @ w_j.T
    part_e = e @ w_e.T  # (B, M, M, out)
    out = part_i[:, :, None, :] + part_j[:, None, :, :] + part_e
    if bias is not None:
        out = out + bias
    return out


class QgatEncoder(nn.Module):
    def __init__(self, cfg, qsim_cfg):
        super().__init__()
        self.cfg = cfg
        self.d_x = cfg.d_x
        self.n_layers = cfg.n_layers
        self.node_in = nn.Linear(3, cfg.d_x, dtype=_RDTYPE)
        self.edge_in = nn.Linear(1, cfg.d_x, dtype=_RDTYPE)
        self.node_norm = FeatureNorm(cfg.d_x)
        self.edge_norm = FeatureNorm(cfg.d_x)
        quantum = cfg.variant == "quantum"
        self.layers = nn.ModuleList(
            _EncoderLayer(cfg.d_x, cfg.score_dim,
                          quantum and cfg.quantum_score,
                          quantum and cfg.quantum_value,
                          cfg.score_blocks, cfg.value_blocks,
                          qsim_cfg, cfg.pqc_checkpoint)
            for _ in range(cfg.n_layers)
        )

    # ------------------------------------------------------------------
    # Contract-level pieces
    # ------------------------------------------------------------------

    def init_embeddings(self, feats, efeats, use_batch_stats=False,
                        update_running=False):
        """Affine input maps plus batch normalization for nodes and edges."""
        x = self.node_norm(self.node_in(feats), use_batch_stats, update_running)
        e = self.edge_norm(self.edge_in(efeats), use_batch_stats, update_running)
        return x, e

    def attention_coefficients(self, x, e, layer_index):
        """Row-stochastic attention matrix (B, M, M) for one layer.

        Scores are LeakyReLU(g . T([x_i || x_j || e_ij])) softmaxed over j,
        with g contracted into T's output side (see module docstring).
        """
        layer = self.layers[layer_index]
        if isinstance(layer.score, QnnTransform):
            pres = [
                _split_pair_matmul(proj.weight, proj.bias, x, e)
                for proj in layer.score.in_projs
            ]
            h = layer.score.measurements(torch.stack(pres, dim=-2))
            w_out = layer.score.out_proj.weight.T @ layer.g
            scores = h @ w_out + layer.score.out_proj.bias @ layer.g
        else:
            w = layer.score.weight.T @ layer.g  # (3d,)
            d = x.shape[-1]
            part_i = x @ w[:d]
            part_j = x @ w[d:2 * d]
            part_e = e @ w[2 * d:]
            scores = (part_i[:, :, None] + part_j[:, None, :] + part_e
                      + layer.score.bias @ layer.g)
        if not torch.isfinite(scores).all():
            raise NumericalError("non-finite attention scores")
        return F.softmax(F.leaky_relu(scores, LEAKY_SLOPE), dim=-1)

    def layer_forward(self, x, attn, layer_index):
        """Residual update: x_i + sum_j a_ij * T1(x_j)."""
        v = self.layers[layer_index].value(x)
        if v.shape != x.shape:
            raise ShapeError(f"value transform changed shape {x.shape} -> {v.shape}")
        return torch.matmul(attn, v) + x

    # ------------------------------------------------------------------
    # Full passes
    # ------------------------------------------------------------------

    def forward(self, feats, efeats, use_batch_stats=False, update_running=False):
        x, e = self.init_embeddings(feats, efeats, use_batch_stats, update_running)
        for li in range(self.n_layers):
            attn = self.attention_coefficients(x, e, li)
            x = self.layer_forward(x, attn, li)
        return Embeddings(
            node_embeddings=x,
            edge_embeddings=e,
            graph_embedding=x.mean(dim=1),
        )

    def encode(self, instances):
        """Embeddings for a list of instances (or one), inference statistics."""
        single = not isinstance(instances, (list, tuple))
        batch = [instances] if single else list(instances)
        feats, efeats = instance_features(batch)
        return self.forward(feats, efeats)

    def refresh_statistics(self, feats, efeats):
        """One training-mode pass through the input maps to move BN statistics."""
        with torch.no_grad():
            self.init_embeddings(feats, efeats, use_batch_stats=True,
                                 update_running=True)
