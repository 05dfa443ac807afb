#!/usr/bin/env python3
"""Open up the graph-attention encoder on one tiny batch.

Shows the three things the layer algebra guarantees: freshly built
layers attend uniformly (their score gate starts at zero), after random
initialization the fast contracted score computation matches the literal
per-pair form, and customer permutations only permute the node
embeddings while the graph embedding stays put.
"""

import numpy as np
import torch
import torch.nn.functional as F

from qroute.config import EncoderConfig, QsimConfig
from qroute.core import Instance, generate_instance
from qroute.encoder import LEAKY_SLOPE, QgatEncoder, instance_features
from qroute.model import init_parameters

torch.set_num_threads(1)

rng = np.random.default_rng(3)
inst = generate_instance(m=4, capacity=20, rng=rng)
enc = QgatEncoder(
    EncoderConfig(d_x=8, n_layers=2, variant="quantum", score_dim=8,
                  score_blocks=1, value_blocks=1),
    QsimConfig(n_qubits=2, n_layers=1),
)

feats, efeats = instance_features([inst])
x, e = enc.init_embeddings(feats, efeats)

print("fresh encoder, layer 0 attention row for node 0:")
attn = enc.attention_coefficients(x, e, 0)
print(" ", np.array2string(attn[0, 0].detach().numpy(), precision=4))
print(f"  uniform over all {inst.m + 1} nodes: the score gate g "
      f"initializes at zero, so every pair scores alike\n")

init_parameters(enc, 11)
x, e = enc.init_embeddings(feats, efeats)
attn = enc.attention_coefficients(x, e, 0)
print("after initialization, the same row:")
print(" ", np.array2string(attn[0, 0].detach().numpy(), precision=4))

# literal form: score every (i, j) pair one concatenation at a time
layer = enc.layers[0]
M = x.shape[1]
literal = torch.zeros(1, M, M, dtype=torch.float64)
for i in range(M):
    for j in range(M):
        pair = torch.cat([x[0, i], x[0, j], e[0, i, j]])
        literal[0, i, j] = layer.g @ layer.score(pair)
literal = F.softmax(F.leaky_relu(literal, LEAKY_SLOPE), dim=-1)
gap = float((attn - literal).abs().max().detach())
print(f"contracted vs literal per-pair scores: max deviation {gap:.3e}\n")

perm = [0, 2, 4, 1, 3]  # depot stays, customers shuffle
permuted = Instance(
    coords=tuple(inst.coords[p] for p in perm),
    demands=tuple(inst.demands[p] for p in perm),
    capacity=inst.capacity,
)
base = enc.encode(inst)
moved = enc.encode(permuted)
node_gap = float(
    (moved.node_embeddings[0] - base.node_embeddings[0][perm]).abs().max()
)
graph_gap = float(
    (moved.graph_embedding - base.graph_embedding).abs().max()
)
print("permuting the customers:")
print(f"  node embeddings follow the permutation (max dev {node_gap:.3e})")
print(f"  graph embedding unchanged          (max dev {graph_gap:.3e})")
