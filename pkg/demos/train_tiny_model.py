#!/usr/bin/env python3
"""Train a miniature classical model long enough to see it learn.

Five short epochs on 6-customer instances, then a before/after
comparison of greedy decoding on held-out instances against the
nearest-neighbor construction and the exact optimum. The whole script
runs in about a minute on one core.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from qroute import ppo
from qroute.baselines import exact_small, nearest_neighbor
from qroute.config import config_from_dict, resolve_config
from qroute.core import generate_instance, route_length
from qroute.encoder import instance_features
from qroute.model import build_model, init_parameters

torch.set_num_threads(1)

CONFIG = config_from_dict({
    "instance": {"m": 6, "capacity": 15},
    "encoder": {"d_x": 16, "n_layers": 2, "variant": "classical",
                "score_blocks": 1},
    "decoder": {"heads": 2, "temperature": 2.0},
    "critic": {"readout_layers": 1, "conv_channels": 8, "quantum": False},
    "qsim": {"n_qubits": 2, "n_layers": 1},
    "ppo": {"epochs": 5, "collect_steps": 4, "collect_batch": 64,
            "update_epochs": 2, "minibatch": 64, "learning_rate": 2e-3,
            "train_instances": 256, "val_instances": 64, "seed": 0},
})

holdout_rng = np.random.default_rng(999)
holdout = [generate_instance(6, 15, holdout_rng) for _ in range(64)]


def greedy_mean(model):
    emb = model.encoder.encode(holdout)
    results = model.decoder.decode_greedy(emb, holdout)
    return float(np.mean([
        route_length(i, r.route) for i, r in zip(holdout, results)
    ]))


fresh = init_parameters(build_model(resolve_config(CONFIG)), 0)
feats, efeats = instance_features(holdout)
fresh.encoder.refresh_statistics(feats, efeats)
before = greedy_mean(fresh)

with tempfile.TemporaryDirectory() as tmp:
    result = ppo.train(CONFIG, Path(tmp) / "run", progress=print)
    arrays_model = build_model(resolve_config(CONFIG))
    from qroute.checkpoint import load_checkpoint
    from qroute.model import load_state_arrays
    arrays, _, _ = load_checkpoint(result.checkpoint_path)
    load_state_arrays(arrays_model, arrays)

after = greedy_mean(arrays_model)
nn_mean = float(np.mean([
    route_length(i, nearest_neighbor(i)) for i in holdout
]))
opt_mean = float(np.mean([exact_small(i)[1] for i in holdout]))

print()
print("greedy mean length on 64 held-out instances:")
print(f"  untrained model   {before:.4f}")
print(f"  trained model     {after:.4f}")
print(f"  nearest-neighbor  {nn_mean:.4f}")
print(f"  exact optimum     {opt_mean:.4f}")
