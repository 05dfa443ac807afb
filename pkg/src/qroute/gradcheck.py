"""Finite-difference verification of every gradient path.

Four scopes: the parameter-shift rule on raw circuits, the encoder
forward, the critic head, and the complete training objective. Each
check perturbs every scalar parameter by a central difference and
compares against the analytic gradient. Relative error uses a unit
floor in the denominator so near-zero components compare absolutely:
|a - f| / max(1, |a|, |f|).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch

from . import qsim
from .config import (
    CriticConfig,
    DecoderConfig,
    EncoderConfig,
    ExperimentConfig,
    InstanceConfig,
    PpoConfig,
    QsimConfig,
    resolve_config,
)
from .core import generate_instance
from .encoder import instance_features
from .errors import ConfigurationError
from .model import ActorCritic, init_parameters
from .ppo import (
    advantages,
    clip_loss,
    collect,
    normalize_rewards,
    ratio,
    total_loss,
    value_loss,
)

SCOPES = ("qsim", "encoder", "critic", "ppo")

_H = 1e-5


@dataclass
class GradReport:
    name: str
    parameters: int
    max_abs_err: float
    max_rel_err: float
    worst: str
    tolerance: float
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: {self.parameters} components, "
            f"max rel err {self.max_rel_err:.3e} (abs {self.max_abs_err:.3e}, "
            f"worst {self.worst}, tol {self.tolerance:.0e})"
        )


def _tiny_config(variant):
    return resolve_config(ExperimentConfig(
        instance=InstanceConfig(m=5, capacity=20),
        encoder=EncoderConfig(d_x=8, n_layers=2, variant=variant,
                              score_blocks=2, value_blocks=1),
        decoder=DecoderConfig(heads=2, temperature=2.0),
        critic=CriticConfig(readout_layers=2, conv_channels=4, conv_width=1,
                            quantum=(variant == "quantum")),
        ppo=PpoConfig(collect_batch=4, minibatch=4),
        qsim=QsimConfig(n_qubits=3, n_layers=2),
    ))


def _fd_gradients(loss_fn, named_params):
    """Central differences of loss_fn over every scalar in named_params."""
    grads = {}
    with torch.no_grad():
        for name, param in named_params:
            flat = param.view(-1)
            grad = np.zeros(flat.numel())
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + _H
                plus = loss_fn()
                flat[i] = orig - _H
                minus = loss_fn()
                flat[i] = orig
                grad[i] = (plus - minus) / (2.0 * _H)
            grads[name] = grad.reshape(tuple(param.shape))
    return grads


def _compare(analytic, numeric, name, tolerance):
    max_abs = 0.0
    max_rel = 0.0
    worst = "-"
    count = 0
    for key in sorted(numeric):
        a = analytic.get(key)
        a = np.zeros_like(numeric[key]) if a is None else a
        f = numeric[key]
        count += f.size
        abs_err = np.abs(a - f)
        rel_err = abs_err / np.maximum(1.0, np.maximum(np.abs(a), np.abs(f)))
        idx = int(np.argmax(rel_err))
        if rel_err.flat[idx] > max_rel:
            max_rel = float(rel_err.flat[idx])
            worst = f"{key}[{idx}]"
        max_abs = max(max_abs, float(abs_err.max()))
    return GradReport(
        name=name,
        parameters=count,
        max_abs_err=max_abs,
        max_rel_err=max_rel,
        worst=worst,
        tolerance=tolerance,
        passed=max_rel <= tolerance,
    )


def _model_gradients(model, loss_builder):
    for p in model.parameters():
        p.grad = None
    loss = loss_builder()
    loss.backward()
    out = {}
    for name, p in model.named_parameters():
        out[name] = (
            np.zeros(tuple(p.shape)) if p.grad is None else p.grad.numpy().copy()
        )
    return out


def check_qsim(seed=0, circuits=50, tolerance=1e-5):
    """Parameter-shift gradients against central differences.

    Gates on absolute error: circuit outputs live in [-1, 1], so the
    absolute scale is the meaningful one.
    """
    rng = np.random.default_rng(seed)
    max_abs = 0.0
    max_rel = 0.0
    worst = "-"
    count = 0
    for trial in range(circuits):
        n = int(rng.integers(1, 7))
        layers = int(rng.integers(1, 6))
        theta = rng.uniform(-np.pi, np.pi, qsim.ROTATIONS_PER_QUBIT * n * layers)
        spec = qsim.CircuitSpec(n_qubits=n, n_layers=layers,
                                theta=torch.from_numpy(theta))
        z = torch.from_numpy(rng.uniform(-np.pi, np.pi, n))
        observable = int(rng.integers(0, n))

        shift = qsim.param_shift_grad(z, spec, observable).numpy()

        def expectation(values):
            s = dataclasses.replace(spec, theta=torch.from_numpy(values))
            state = qsim.apply_pqc(qsim.embed(z), s)
            return float(qsim.measure(state)[observable])

        fd = np.zeros_like(theta)
        for k in range(theta.size):
            bumped = theta.copy()
            bumped[k] += _H
            plus = expectation(bumped)
            bumped[k] -= 2.0 * _H
            minus = expectation(bumped)
            fd[k] = (plus - minus) / (2.0 * _H)

        abs_err = np.abs(shift - fd)
        rel_err = abs_err / np.maximum(1.0, np.maximum(np.abs(shift), np.abs(fd)))
        count += theta.size
        idx = int(np.argmax(abs_err))
        if abs_err[idx] > max_abs:
            worst = f"circuit{trial}.theta[{idx}]"
        max_abs = max(max_abs, float(abs_err.max()))
        max_rel = max(max_rel, float(rel_err.max()))
    return GradReport("qsim", count, max_abs, max_rel, worst, tolerance,
                      max_abs <= tolerance)


def _fresh_model(variant, seed, episodes=2):
    cfg = _tiny_config(variant)
    model = ActorCritic(cfg)
    init_parameters(model, seed)
    rng = np.random.default_rng(seed + 1)
    instances = [
        generate_instance(cfg.instance.m, cfg.instance.capacity, rng)
        for _ in range(episodes)
    ]
    feats, efeats = instance_features(instances)
    model.encoder.refresh_statistics(feats, efeats)
    return cfg, model, instances, feats, efeats


def check_encoder(variant, seed=0, tolerance=1e-4):
    """Autograd through the full encoder against finite differences."""
    _, model, _, feats, efeats = _fresh_model(variant, seed)
    encoder = model.encoder
    weights = np.random.default_rng(seed + 2).standard_normal(encoder.d_x)
    w = torch.from_numpy(weights)

    def loss_tensor():
        emb = encoder(feats, efeats)
        return (emb.graph_embedding @ w).sum() + emb.node_embeddings.pow(2).mean()

    analytic = _model_gradients(encoder, loss_tensor)
    numeric = _fd_gradients(lambda: float(loss_tensor().detach()),
                            list(encoder.named_parameters()))
    return _compare(analytic, numeric, f"encoder[{variant}]", tolerance)


def check_critic(variant, seed=0, tolerance=1e-4):
    """Autograd through encoder plus critic against finite differences."""
    _, model, _, feats, efeats = _fresh_model(variant, seed)

    def loss_tensor():
        return model.critic(model.encoder(feats, efeats)).sum()

    params = [(n, p) for n, p in model.named_parameters()
              if not n.startswith("decoder.")]
    analytic = _model_gradients(model, loss_tensor)
    numeric = _fd_gradients(lambda: float(loss_tensor().detach()), params)
    analytic = {k: v for k, v in analytic.items() if not k.startswith("decoder.")}
    return _compare(analytic, numeric, f"critic[{variant}]", tolerance)


def check_ppo(variant, seed=0, tolerance=1e-4):
    """Autograd of the full training objective against finite differences.

    Episodes are collected once and held fixed; the objective replays
    them under perturbed parameters, exactly as a training update does.
    """
    cfg, model, instances, _, _ = _fresh_model(variant, seed)
    rng = np.random.default_rng(seed + 3)
    buffer = collect(model, instances, len(instances),
                     cfg.decoder.temperature, rng)
    normalize_rewards(buffer)
    advantages(buffer, model)

    old_lp = torch.from_numpy(np.asarray(buffer.old_log_probs))
    adv = torch.from_numpy(buffer.advantages)
    targets = torch.from_numpy(buffer.norm_rewards)

    def loss_tensor():
        feats, efeats = instance_features(buffer.instances)
        emb = model.encoder(feats, efeats)
        log_probs, entropies = model.decoder.replay(
            emb, buffer.instances, buffer.actions,
            temperature=cfg.decoder.temperature,
        )
        values = model.critic(emb)
        ratios = ratio(log_probs, old_lp)
        return total_loss(
            clip_loss(ratios, adv, cfg.ppo.clip_eps),
            value_loss(values, targets),
            entropies.mean(),
            cfg.ppo,
        )

    analytic = _model_gradients(model, loss_tensor)
    numeric = _fd_gradients(lambda: float(loss_tensor().detach()),
                            list(model.named_parameters()))
    return _compare(analytic, numeric, f"ppo[{variant}]", tolerance)


def run_scope(scope, seed=0):
    """All reports for one scope name, or every scope for "all"."""
    if scope == "all":
        reports = []
        for s in SCOPES:
            reports.extend(run_scope(s, seed))
        return reports
    if scope == "qsim":
        return [check_qsim(seed)]
    if scope == "encoder":
        return [check_encoder("classical", seed), check_encoder("quantum", seed)]
    if scope == "critic":
        return [check_critic("classical", seed), check_critic("quantum", seed)]
    if scope == "ppo":
        return [check_ppo("classical", seed), check_ppo("quantum", seed)]
    raise ConfigurationError(f"unknown gradcheck scope {scope!r}")
