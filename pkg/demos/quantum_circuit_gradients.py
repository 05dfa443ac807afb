#!/usr/bin/env python3
"""Walk through the statevector simulator and the parameter-shift rule.

Embeds a classical vector into a 3-qubit register, evolves it through a
2-layer rotation-plus-ring circuit, measures Z expectations, then shows
that the parameter-shift gradient agrees with finite differences and
with backpropagation for every angle.
"""

import numpy as np
import torch

from qroute.qsim import (
    CircuitSpec,
    apply_pqc,
    embed,
    measure,
    param_shift_grad,
)

torch.set_num_threads(1)

N_QUBITS, N_LAYERS = 3, 2
rng = np.random.default_rng(1)
spec = CircuitSpec(N_QUBITS, N_LAYERS,
                   rng.uniform(-np.pi, np.pi, N_QUBITS * N_LAYERS * 3))
z = rng.uniform(-np.pi, np.pi, N_QUBITS)

print(f"circuit: {spec.n_qubits} qubits, {spec.n_layers} layers, "
      f"{spec.n_params} rotation angles")

state = embed(z)
print(f"embedded state norm: {float(state.abs().pow(2).sum()):.15f}")

evolved = apply_pqc(state, spec)
print("Z expectations:", np.array2string(measure(evolved).numpy(),
                                         precision=6))

# gradient of qubit 0's expectation, three independent ways
OBS = 0
shift = param_shift_grad(z, spec, OBS).numpy()

h = 1e-5
fd = np.zeros(spec.n_params)
base = spec.theta.numpy().copy()
for k in range(spec.n_params):
    for sign in (+1, -1):
        bumped = base.copy()
        bumped[k] += sign * h
        out = measure(apply_pqc(state, CircuitSpec(N_QUBITS, N_LAYERS, bumped)))
        fd[k] += sign * float(out[OBS]) / (2 * h)

theta = torch.from_numpy(base).requires_grad_(True)
measure(apply_pqc(state, CircuitSpec(N_QUBITS, N_LAYERS, theta)))[OBS].backward()
auto = theta.grad.numpy()

print(f"max |shift - finite difference|: {np.abs(shift - fd).max():.3e}")
print(f"max |shift - backprop|:          {np.abs(shift - auto).max():.3e}")
print("the shift rule is exact; both deviations sit at numerical noise")
