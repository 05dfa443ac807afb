"""Dense statevector simulation of the parameterized circuits inside the model.

A register of n qubits is a complex128 tensor whose last axis has length
2**n; leading axes are batch axes. Basis index bit q (counting from the
most significant bit) is the state of qubit q. The circuit family is
fixed: per layer, R_x, R_y, R_z on every qubit followed by a ring of
CNOTs (qubit i controls qubit i+1 mod n), which keeps every trainable
angle in exactly one rotation gate so the parameter-shift rule applies.

Everything here runs through torch so gradients flow end to end; the
parameter-shift rule is kept as an independent gradient path for
cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch
from torch import nn

from .errors import ConfigurationError, NumericalError, ShapeError

ROTATIONS_PER_QUBIT = 3  # R_x, R_y, R_z per qubit per layer
MAX_QUBITS = 20  # 2**20 amplitudes; simulation refuses beyond this
NORM_TOLERANCE = 1e-9
_CHUNK = 4096  # statevector rows evolved at once inside QnnTransform

_CDTYPE = torch.complex128
_RDTYPE = torch.float64


def ring_entangler(n_qubits):
    """CNOT placements (control, target) around a ring; empty for one qubit."""
    if n_qubits < 2:
        return ()
    return tuple((i, (i + 1) % n_qubits) for i in range(n_qubits))


@dataclass
class CircuitSpec:
    """Structure and angles of one trainable circuit.

    theta is flat, laid out as [layer, qubit, (x, y, z)]; it may be a torch
    tensor (possibly requiring grad) or any array-like.
    """

    n_qubits: int
    n_layers: int
    theta: object
    entangler: tuple = field(default=None)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ConfigurationError(f"need at least one qubit, got {self.n_qubits}")
        if self.n_qubits > MAX_QUBITS:
            raise ConfigurationError(
                f"{self.n_qubits} qubits exceeds the simulation ceiling of {MAX_QUBITS}"
            )
        if self.n_layers < 0:
            raise ConfigurationError(f"negative layer count {self.n_layers}")
        if self.entangler is None:
            self.entangler = ring_entangler(self.n_qubits)
        for c, t in self.entangler:
            if not (0 <= c < self.n_qubits and 0 <= t < self.n_qubits) or c == t:
                raise ConfigurationError(f"bad entangler placement ({c}, {t})")
        if not torch.is_tensor(self.theta):
            self.theta = torch.as_tensor(self.theta, dtype=_RDTYPE)
        if self.theta.numel() != self.n_params:
            raise ShapeError(
                f"theta has {self.theta.numel()} entries, circuit needs {self.n_params}"
            )

    @property
    def n_params(self):
        return self.n_layers * self.n_qubits * ROTATIONS_PER_QUBIT


def n_states(n_qubits):
    return 1 << n_qubits


def embed(z, n_qubits=None):
    """Angle-embed a real vector: R_y(z_q) on qubit q of the all-zeros state.

    z has shape (..., n_qubits); the result is the product state with
    amplitudes prod_q (cos(z_q/2), sin(z_q/2)), shape (..., 2**n_qubits).
    """
    z = torch.as_tensor(z, dtype=_RDTYPE) if not torch.is_tensor(z) else z
    n = z.shape[-1]
    if n_qubits is not None and n != n_qubits:
        raise ShapeError(f"embedding expects {n_qubits} angles, got {n}")
    if n > MAX_QUBITS:
        raise ShapeError(f"{n} qubits exceeds the simulation ceiling of {MAX_QUBITS}")
    half = z * 0.5
    c, s = torch.cos(half), torch.sin(half)
    state = torch.ones(z.shape[:-1] + (1,), dtype=_RDTYPE, device=z.device)
    for q in range(n):
        pair = torch.stack((c[..., q], s[..., q]), dim=-1)  # (..., 2)
        state = state[..., :, None] * pair[..., None, :]
        state = state.reshape(z.shape[:-1] + (-1,))
    return state.to(_CDTYPE)


def _apply_single(state, n, qubit, m00, m01, m10, m11):
    """Apply a 2x2 gate to one qubit. Matrix entries are 0-dim complex tensors."""
    left = 1 << qubit
    right = 1 << (n - qubit - 1)
    shaped = state.reshape(state.shape[:-1] + (left, 2, right))
    s0 = shaped[..., 0, :]
    s1 = shaped[..., 1, :]
    out = torch.stack((m00 * s0 + m01 * s1, m10 * s0 + m11 * s1), dim=-2)
    return out.reshape(state.shape)


def _rot_entries(axis, angle):
    half = angle * 0.5
    c = torch.cos(half)
    s = torch.sin(half)
    zero = torch.zeros((), dtype=_RDTYPE, device=angle.device)
    if axis == 0:  # R_x
        return (torch.complex(c, zero), torch.complex(zero, -s),
                torch.complex(zero, -s), torch.complex(c, zero))
    if axis == 1:  # R_y
        return (torch.complex(c, zero), torch.complex(-s, zero),
                torch.complex(s, zero), torch.complex(c, zero))
    # R_z
    return (torch.complex(c, -s), torch.complex(zero, zero),
            torch.complex(zero, zero), torch.complex(c, s))


@lru_cache(maxsize=None)
def _cnot_perm(n, control, target):
    idx = np.arange(1 << n)
    cbit = 1 << (n - control - 1)
    tbit = 1 << (n - target - 1)
    flipped = np.where(idx & cbit, idx ^ tbit, idx)
    return torch.from_numpy(flipped)


def apply_pqc(state, spec, inverse=False):
    """Evolve a state through the circuit; norm is preserved by unitarity.

    With inverse=True the adjoint circuit is applied, which undoes the
    forward pass exactly.
    """
    n = spec.n_qubits
    if state.shape[-1] != n_states(n):
        raise ShapeError(
            f"state has dimension {state.shape[-1]}, circuit needs {n_states(n)}"
        )
    theta = spec.theta
    if not torch.is_tensor(theta):
        theta = torch.as_tensor(theta, dtype=_RDTYPE)
    angles = theta.reshape(spec.n_layers, n, ROTATIONS_PER_QUBIT)

    layers = range(spec.n_layers - 1, -1, -1) if inverse else range(spec.n_layers)
    for layer in layers:
        if inverse:
            for c, t in reversed(spec.entangler):
                state = state.index_select(-1, _cnot_perm(n, c, t).to(state.device))
            axis_order = (2, 1, 0)
        else:
            axis_order = (0, 1, 2)
        for q in range(n):
            for axis in axis_order:
                angle = -angles[layer, q, axis] if inverse else angles[layer, q, axis]
                state = _apply_single(state, n, q, *_rot_entries(axis, angle))
        if not inverse:
            for c, t in spec.entangler:
                state = state.index_select(-1, _cnot_perm(n, c, t).to(state.device))
    return state


@lru_cache(maxsize=None)
def _z_signs(n):
    idx = np.arange(1 << n)
    signs = np.empty((1 << n, n), dtype=np.float64)
    for q in range(n):
        bit = 1 << (n - q - 1)
        signs[:, q] = np.where(idx & bit, -1.0, 1.0)
    return torch.from_numpy(signs)


def measure(state, n_qubits=None):
    """Per-qubit Pauli-Z expectations, shape (..., n_qubits), each in [-1, 1].

    Refuses states whose squared norm has drifted more than 1e-9 from 1.
    """
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if (1 << n) != dim:
        raise ShapeError(f"state dimension {dim} is not a power of two")
    if n_qubits is not None and n != n_qubits:
        raise ShapeError(f"expected {n_qubits} qubits, state has {n}")
    probs = state.real ** 2 + state.imag ** 2
    norms = probs.sum(dim=-1)
    drift = (norms.detach() - 1.0).abs().max().item()
    if drift > NORM_TOLERANCE:
        raise NumericalError(f"state norm drifted by {drift:.3e}; not a unit vector")
    return probs @ _z_signs(n).to(probs.device)


def qnn_forward(z, spec, in_proj, out_proj):
    """Full block: project, bound to [-pi, pi], embed, evolve, measure, project.

    in_proj maps the input to n_qubits angles (pre-activation); out_proj
    maps the n_qubits expectation values to the output. Both are callables
    (typically torch Linear modules).
    """
    z = torch.as_tensor(z, dtype=_RDTYPE) if not torch.is_tensor(z) else z
    pre = in_proj(z)
    if pre.shape[-1] != spec.n_qubits:
        raise ShapeError(
            f"in_proj produced {pre.shape[-1]} angles, circuit has {spec.n_qubits} qubits"
        )
    angles = torch.tanh(pre) * math.pi
    h = measure(apply_pqc(embed(angles), spec), spec.n_qubits)
    return out_proj(h)


def param_shift_grad(z, spec, observable_index):
    """Gradient of one Z expectation w.r.t. every angle via parameter shifts.

    Component k is (f(theta_k + pi/2) - f(theta_k - pi/2)) / 2 where f is
    the expectation of Z on the given qubit after embedding z and running
    the circuit. Independent of autograd by construction.
    """
    if not (0 <= observable_index < spec.n_qubits):
        raise ShapeError(f"observable index {observable_index} out of range")

    with torch.no_grad():
        base = torch.as_tensor(spec.theta, dtype=_RDTYPE).detach().reshape(-1).clone()
        psi0 = embed(torch.as_tensor(z, dtype=_RDTYPE), spec.n_qubits)

        def f(theta):
            shifted = CircuitSpec(spec.n_qubits, spec.n_layers, theta, spec.entangler)
            return measure(apply_pqc(psi0, shifted), spec.n_qubits)[..., observable_index]

        grad = torch.empty(base.numel(), dtype=_RDTYPE)
        for k in range(base.numel()):
            plus = base.clone()
            plus[k] += math.pi / 2
            minus = base.clone()
            minus[k] -= math.pi / 2
            grad[k] = 0.5 * (f(plus) - f(minus))
    return grad


class QnnTransform(nn.Module):
    """Drop-in replacement for an affine feature map, built from QNN blocks.

    Each block projects the input down to one angle per qubit, runs the
    trainable circuit, and measures per-qubit Z. Block measurements are
    concatenated and projected up to the output width. The projections are
    classical parameters; only the rotation angles (named theta_*) count
    as quantum.
    """

    def __init__(self, d_in, d_out, n_blocks, n_qubits, n_layers, checkpoint=True):
        super().__init__()
        if n_blocks < 1:
            raise ConfigurationError(f"need at least one block, got {n_blocks}")
        if n_qubits > MAX_QUBITS:
            raise ConfigurationError(
                f"{n_qubits} qubits exceeds the simulation ceiling of {MAX_QUBITS}"
            )
        self.d_in = d_in
        self.d_out = d_out
        self.n_blocks = n_blocks
        self.n_qubits = n_qubits
        self.n_layers = n_layers
        self.entangler = ring_entangler(n_qubits)
        self.checkpoint = checkpoint
        self.in_projs = nn.ModuleList(
            nn.Linear(d_in, n_qubits, dtype=_RDTYPE) for _ in range(n_blocks)
        )
        n_params = n_layers * n_qubits * ROTATIONS_PER_QUBIT
        self.thetas = nn.ParameterList(
            nn.Parameter(torch.zeros(n_params, dtype=_RDTYPE)) for _ in range(n_blocks)
        )
        self.out_proj = nn.Linear(n_blocks * n_qubits, d_out, dtype=_RDTYPE)

    @property
    def quantum_parameter_count(self):
        return sum(p.numel() for p in self.thetas)

    def project(self, x):
        """Per-block angle pre-activations, shape (..., n_blocks, n_qubits)."""
        return torch.stack([proj(x) for proj in self.in_projs], dim=-2)

    def _evolve_block(self, pre, theta):
        spec = CircuitSpec(self.n_qubits, self.n_layers, theta, self.entangler)
        angles = torch.tanh(pre) * math.pi
        return measure(apply_pqc(embed(angles), spec), self.n_qubits)

    def measurements(self, pre):
        """Per-block expectation values for precomputed pre-activations.

        pre has shape (..., n_blocks, n_qubits); the result concatenates
        block measurements, shape (..., n_blocks * n_qubits). The circuit
        part is evaluated in chunks to bound the live statevector memory,
        with activation checkpointing when gradients are being tracked.
        """
        lead = pre.shape[:-2]
        flat = pre.reshape(-1, self.n_blocks, self.n_qubits)
        outs = []
        for start in range(0, flat.shape[0], _CHUNK):
            chunk = flat[start:start + _CHUNK]
            per_block = []
            for b in range(self.n_blocks):
                args = (chunk[:, b, :], self.thetas[b])
                if self.checkpoint and torch.is_grad_enabled() and chunk.requires_grad:
                    h = torch.utils.checkpoint.checkpoint(
                        self._evolve_block, *args, use_reentrant=False
                    )
                else:
                    h = self._evolve_block(*args)
                per_block.append(h)
            outs.append(torch.cat(per_block, dim=-1))
        return torch.cat(outs, dim=0).reshape(lead + (self.n_blocks * self.n_qubits,))

    def evolve(self, pre):
        """Measurements followed by the shared output projection."""
        return self.out_proj(self.measurements(pre))

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"expected input width {self.d_in}, got {x.shape[-1]}")
        return self.evolve(self.project(x))
