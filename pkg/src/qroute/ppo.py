"""Clipped-surrogate policy optimization over sampled routing episodes.

One training epoch: refresh normalization statistics, collect sampled
episodes, normalize rewards over the buffer, subtract critic values to
get advantages, then run several passes of minibatch updates that replay
the stored action sequences under the current parameters. Normalization
statistics stay frozen during the update passes, so the first update of
each epoch starts from a probability ratio of exactly one.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import env as cvrp_env
from .checkpoint import save_checkpoint, load_checkpoint
from .config import (
    ExperimentConfig,
    config_hash,
    resolve_config,
    save_resolved_config,
)
from .core import generate_instance, route_length
from .encoder import instance_features
from .errors import ConfigurationError, NumericalError
from .model import build_model, init_parameters, load_state_arrays, state_arrays

RATIO_CAP = 1e6

_F64 = torch.float64


@dataclass
class RolloutBuffer:
    """Episode store for one collection phase.

    ``raw_rewards`` holds negative route lengths. ``norm_rewards``,
    ``values`` and ``advantages`` start as None and are filled by
    normalize_rewards() and advantages().
    """

    instances: list = field(default_factory=list)
    instance_ids: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    old_log_probs: list = field(default_factory=list)
    raw_rewards: list = field(default_factory=list)
    norm_rewards: np.ndarray | None = None
    values: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)


def collect(model, instances, batch_size, temperature, rng, first_id=0):
    """Sample one episode per instance and store it in a fresh buffer."""
    buf = RolloutBuffer()
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        results = model.decoder.decode_sample(
            model.encoder.encode(chunk), chunk, temperature=temperature, rng=rng
        )
        for offset, res in enumerate(results):
            inst = chunk[offset]
            buf.instances.append(inst)
            buf.instance_ids.append(first_id + start + offset)
            buf.actions.append(list(res.route.sequence[1:]))
            buf.old_log_probs.append(float(res.log_prob))
            buf.raw_rewards.append(-route_length(inst, res.route))
    return buf


def normalize_rewards(buffer):
    """Shift and scale raw rewards to mean 0, standard deviation 1.

    If the spread is below 1e-8 the rewards are only mean-centered.
    """
    raw = np.asarray(buffer.raw_rewards, dtype=np.float64)
    centered = raw - raw.mean()
    std = raw.std()
    if std < 1e-8:
        buffer.norm_rewards = centered
    else:
        buffer.norm_rewards = centered / std
    return buffer


def advantages(buffer, model, batch_size=256):
    """Fill critic values and advantages (normalized reward minus value)."""
    if buffer.norm_rewards is None:
        raise ConfigurationError("normalize_rewards must run before advantages")
    vals = []
    with torch.no_grad():
        for start in range(0, len(buffer), batch_size):
            chunk = buffer.instances[start:start + batch_size]
            emb = model.encoder.encode(chunk)
            vals.append(model.critic(emb).numpy())
    buffer.values = np.concatenate(vals) if vals else np.zeros(0)
    buffer.advantages = buffer.norm_rewards - buffer.values
    return buffer


def ratio(new_log_prob, old_log_prob):
    """Probability ratio exp(new - old), capped at 1e6 against overflow."""
    return torch.exp(new_log_prob - old_log_prob).clamp(max=RATIO_CAP)


def clip_loss(ratios, advantage, clip_eps):
    """Mean clipped surrogate min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    clipped = ratios.clamp(1.0 - clip_eps, 1.0 + clip_eps)
    return torch.minimum(ratios * advantage, clipped * advantage).mean()


def value_loss(values, norm_rewards):
    """Mean squared error between critic values and normalized rewards."""
    return ((values - norm_rewards) ** 2).mean()


def entropy_loss(distributions):
    """Mean Shannon entropy of a sequence of step distributions.

    Zero-probability entries contribute zero. The trainer gets the same
    quantity from replayed episodes; this standalone form exists for
    direct checks against recorded distributions.
    """
    ents = []
    for p in distributions:
        p = torch.as_tensor(np.asarray(p), dtype=_F64)
        safe_log = torch.where(p > 0, torch.log(p.clamp(min=1e-300)), torch.zeros((), dtype=_F64))
        ents.append(-(p * safe_log).sum())
    if not ents:
        raise ConfigurationError("entropy_loss needs at least one distribution")
    return torch.stack(ents).mean()


def total_loss(clip_term, value_term, entropy_term, cfg):
    """Combined minimization objective.

    The surrogate and the entropy are maximized, the value error is
    minimized, so they enter with opposite signs.
    """
    return (
        -cfg.policy_weight * clip_term
        + cfg.value_weight * value_term
        - cfg.entropy_weight * entropy_term
    )


@dataclass
class TrainResult:
    out_dir: Path
    metrics_path: Path
    checkpoint_path: Path
    epochs_run: int
    final_val_mean: float
    ratio_clamped: int


def _epoch_rng(seed, salt, epoch):
    return np.random.default_rng([seed, salt, epoch])


def _replay_chunk(model, instances, actions, temperature):
    feats, efeats = instance_features(instances)
    emb = model.encoder(feats, efeats)
    log_probs, entropies = model.decoder.replay(
        emb, instances, actions, temperature=temperature
    )
    values = model.critic(emb)
    return log_probs, entropies, values


def _validation_losses(model, buffer, temperature, cfg_ppo, batch_size):
    """Training objective evaluated on a buffer without touching parameters.

    Replayed log-probabilities equal the stored ones bit for bit (same
    parameters, same arithmetic), so the ratio term sits at exactly 1.
    """
    mse_sum = 0.0
    ent_sum = 0.0
    ent_count = 0
    with torch.no_grad():
        for start in range(0, len(buffer), batch_size):
            sl = slice(start, start + batch_size)
            _, entropies, values = _replay_chunk(
                model, buffer.instances[sl], buffer.actions[sl], temperature
            )
            target = torch.from_numpy(buffer.norm_rewards[sl])
            mse_sum += float(((values - target) ** 2).sum())
            ent_sum += float(entropies.sum())
            ent_count += entropies.numel()
    n = len(buffer)
    clip_term = float(np.mean(buffer.advantages))
    loss = total_loss(
        torch.tensor(clip_term, dtype=_F64),
        torch.tensor(mse_sum / n, dtype=_F64),
        torch.tensor(ent_sum / max(ent_count, 1), dtype=_F64),
        cfg_ppo,
    )
    return float(loss)


def _greedy_mean(model, instances, batch_size):
    total = 0.0
    for start in range(0, len(instances), batch_size):
        chunk = instances[start:start + batch_size]
        results = model.decoder.decode_greedy(model.encoder.encode(chunk), chunk)
        total += sum(route_length(i, r.route) for i, r in zip(chunk, results))
    return total / len(instances)


def _nan_abort(out_dir, epoch, detail):
    dump = {"epoch": epoch, **detail}
    path = Path(out_dir) / "nan_dump.json"
    path.write_text(json.dumps(dump, indent=2, default=repr) + "\n")
    raise NumericalError(
        f"non-finite loss at epoch {epoch}; diagnostics in {path}"
    )


def train(cfg: ExperimentConfig, out_dir, resume=None, progress=None):
    """Run the full training loop and leave metrics plus checkpoints in out_dir.

    ``resume`` takes a checkpoint path written by a previous run with an
    identical resolved configuration. ``progress`` is called with one
    summary string per epoch when given.
    """
    cfg = resolve_config(cfg)
    ppo_cfg = cfg.ppo
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved_config(cfg, out_dir / "resolved_config.json")
    cfg_hash = config_hash(cfg)

    model = build_model(cfg)
    init_parameters(model, ppo_cfg.seed)

    start_epoch = 1
    if resume is not None:
        arrays, stored_hash, stored_epoch = load_checkpoint(resume)
        # architecture compatibility is the hard gate (strict name/shape
        # match); a schedule-only config change may still resume
        load_state_arrays(model, arrays)
        if stored_hash != cfg_hash and progress is not None:
            progress("note: resuming from a checkpoint written under a "
                     "different configuration (architecture matches)")
        start_epoch = stored_epoch + 1

    optimizer = torch.optim.Adam(model.parameters(), lr=ppo_cfg.learning_rate)
    temperature = cfg.decoder.temperature
    m = cfg.instance.m
    capacity = cfg.instance.capacity

    pool = None
    if ppo_cfg.train_instances > 0:
        pool_rng = _epoch_rng(ppo_cfg.seed, 3, 0)
        pool = [
            generate_instance(m, capacity, pool_rng)
            for _ in range(ppo_cfg.train_instances)
        ]
    val_rng = _epoch_rng(ppo_cfg.seed, 5, 0)
    val_instances = [
        generate_instance(m, capacity, val_rng)
        for _ in range(ppo_cfg.val_instances)
    ]

    metrics_path = out_dir / "metrics.csv"
    checkpoint_path = out_dir / "checkpoint.qgat"
    mode = "a" if (resume is not None and metrics_path.exists()) else "w"
    metrics = open(metrics_path, mode)
    if mode == "w":
        metrics.write("epoch,train_loss,val_loss,val_mean_length,wall_time_s\n")

    episodes_per_epoch = ppo_cfg.collect_steps * ppo_cfg.collect_batch
    ratio_clamped = 0
    final_val_mean = float("nan")
    try:
        for epoch in range(start_epoch, ppo_cfg.epochs + 1):
            t0 = time.perf_counter()

            if pool is not None:
                order = _epoch_rng(ppo_cfg.seed, 7, epoch).permutation(len(pool))
                picks = np.resize(order, episodes_per_epoch)
                episode_instances = [pool[i] for i in picks]
            else:
                gen_rng = _epoch_rng(ppo_cfg.seed, 7, epoch)
                episode_instances = [
                    generate_instance(m, capacity, gen_rng)
                    for _ in range(episodes_per_epoch)
                ]

            # refresh normalization statistics once, then hold them fixed
            # through collection and updates so replayed ratios start at 1
            stat_chunk = episode_instances[:ppo_cfg.collect_batch]
            feats, efeats = instance_features(stat_chunk)
            model.encoder.refresh_statistics(feats, efeats)

            sample_rng = _epoch_rng(ppo_cfg.seed, 11, epoch)
            buffer = collect(
                model,
                episode_instances,
                ppo_cfg.collect_batch,
                temperature,
                sample_rng,
            )
            normalize_rewards(buffer)
            advantages(buffer, model, batch_size=ppo_cfg.collect_batch)

            old_lp = torch.from_numpy(np.asarray(buffer.old_log_probs))
            adv = torch.from_numpy(buffer.advantages)
            targets = torch.from_numpy(buffer.norm_rewards)

            update_rng = _epoch_rng(ppo_cfg.seed, 13, epoch)
            batch_losses = []
            for _ in range(ppo_cfg.update_epochs):
                perm = update_rng.permutation(len(buffer))
                for start in range(0, len(perm), ppo_cfg.minibatch):
                    idx = perm[start:start + ppo_cfg.minibatch]
                    insts = [buffer.instances[i] for i in idx]
                    acts = [buffer.actions[i] for i in idx]
                    log_probs, entropies, values = _replay_chunk(
                        model, insts, acts, temperature
                    )
                    idx_t = torch.from_numpy(idx)
                    ratios = ratio(log_probs, old_lp[idx_t])
                    ratio_clamped += int((ratios.detach() >= RATIO_CAP).sum())
                    loss = total_loss(
                        clip_loss(ratios, adv[idx_t], ppo_cfg.clip_eps),
                        value_loss(values, targets[idx_t]),
                        entropies.mean(),
                        ppo_cfg,
                    )
                    if not torch.isfinite(loss):
                        _nan_abort(out_dir, epoch, {
                            "instance_ids": [buffer.instance_ids[i] for i in idx],
                            "loss": float(loss),
                            "mean_ratio": float(ratios.detach().mean()),
                        })
                    optimizer.zero_grad()
                    loss.backward()
                    torch.nn.utils.clip_grad_norm_(
                        model.parameters(), ppo_cfg.grad_clip
                    )
                    optimizer.step()
                    batch_losses.append(float(loss.detach()))
            train_loss = float(np.mean(batch_losses))

            val_sample_rng = _epoch_rng(ppo_cfg.seed, 17, epoch)
            val_buf = collect(
                model,
                val_instances,
                ppo_cfg.collect_batch,
                temperature,
                val_sample_rng,
            )
            normalize_rewards(val_buf)
            advantages(val_buf, model, batch_size=ppo_cfg.collect_batch)
            val_loss = _validation_losses(
                model, val_buf, temperature, ppo_cfg, ppo_cfg.collect_batch
            )
            val_mean = _greedy_mean(model, val_instances, ppo_cfg.collect_batch)
            final_val_mean = val_mean

            wall = time.perf_counter() - t0
            metrics.write(
                f"{epoch},{train_loss!r},{val_loss!r},{val_mean!r},{wall!r}\n"
            )
            metrics.flush()

            if epoch % ppo_cfg.checkpoint_every == 0 or epoch == ppo_cfg.epochs:
                save_checkpoint(
                    checkpoint_path, state_arrays(model), cfg_hash, epoch
                )
            if progress is not None:
                progress(
                    f"epoch {epoch}/{ppo_cfg.epochs} "
                    f"train_loss {train_loss:.4f} val_loss {val_loss:.4f} "
                    f"val_mean {val_mean:.4f} ({wall:.1f}s)"
                )
    finally:
        metrics.close()

    return TrainResult(
        out_dir=out_dir,
        metrics_path=metrics_path,
        checkpoint_path=checkpoint_path,
        epochs_run=ppo_cfg.epochs - start_epoch + 1,
        final_val_mean=final_val_mean,
        ratio_clamped=ratio_clamped,
    )
