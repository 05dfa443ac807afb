#!/usr/bin/env python3
"""Drive the whole command-line pipeline end to end.

generate -> train -> eval -> params, each as a subprocess of
`python -m qroute`, inside a temporary directory. Prints every command
before running it. Takes around half a minute.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = {
    "instance": {"m": 5, "capacity": 15},
    "encoder": {"d_x": 8, "n_layers": 1, "variant": "classical",
                "score_blocks": 1},
    "decoder": {"heads": 2, "temperature": 2.0},
    "critic": {"readout_layers": 1, "conv_channels": 4, "quantum": False},
    "qsim": {"n_qubits": 2, "n_layers": 1},
    "ppo": {"epochs": 2, "collect_steps": 2, "collect_batch": 32,
            "update_epochs": 1, "minibatch": 32, "learning_rate": 1e-3,
            "val_instances": 16, "seed": 0},
}


def run(*args):
    cmd = [sys.executable, "-m", "qroute", "--threads", "1", *args]
    print("$", " ".join(str(a) for a in cmd[2:]))
    proc = subprocess.run(cmd, text=True, capture_output=True)
    sys.stdout.write(proc.stdout)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        raise SystemExit(proc.returncode)
    print()


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config = tmp / "config.json"
    config.write_text(json.dumps(CONFIG, indent=2))

    run("generate", "--m", "5", "--capacity", "15", "--count", "20",
        "--seed", "1", "--out", tmp / "instances.jsonl")
    run("train", "--config", config, "--out-dir", tmp / "run")
    run("eval",
        "--checkpoint", tmp / "run" / "checkpoint.qgat",
        "--instances", tmp / "instances.jsonl",
        "--strategy", "both", "--width", "8",
        "--out", tmp / "results.csv",
        "--solutions", tmp / "solutions.jsonl")
    run("params", "--config", config)

    print("results.csv:")
    print((tmp / "results.csv").read_text())
