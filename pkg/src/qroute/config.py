"""Experiment configuration: schema, JSON loading, validation, hashing.

The config file is a single JSON document with sections instance,
encoder, decoder, critic, ppo, and qsim; every field has a default, and
a fully resolved copy (all defaults filled in) is written beside run
outputs so results stay attributable to an exact configuration. The
sha256 of the resolved document names the configuration in checkpoint
headers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .core import default_capacity
from .errors import ConfigurationError
from .qsim import MAX_QUBITS


@dataclass
class InstanceConfig:
    m: int = 20
    capacity: int = None  # resolved from the benchmark table when absent


@dataclass
class QsimConfig:
    n_qubits: int = 6
    n_layers: int = 5
    entangler: str = "ring"


@dataclass
class EncoderConfig:
    d_x: int = 128
    n_layers: int = 3
    variant: str = "quantum"  # "quantum" | "classical"
    score_dim: int = None  # defaults to d_x
    score_blocks: int = 3
    value_blocks: int = 1
    quantum_score: bool = True
    quantum_value: bool = True
    pqc_checkpoint: bool = True


@dataclass
class DecoderConfig:
    heads: int = 8
    clip: float = 10.0
    temperature: float = None  # resolved from instance size when absent
    strategy: str = "both"  # "greedy" | "sampling" | "both"
    sample_width: int = 128
    seed: int = 0


@dataclass
class CriticConfig:
    readout_layers: int = 3
    conv_channels: int = 64
    conv_width: int = 1
    quantum: bool = True


@dataclass
class PpoConfig:
    epochs: int = 5
    collect_steps: int = 1  # rollout batches gathered per epoch
    collect_batch: int = 256
    update_epochs: int = 3
    minibatch: int = 256
    clip_eps: float = 0.2
    policy_weight: float = 1.0
    value_weight: float = 0.5
    entropy_weight: float = 0.01
    learning_rate: float = 1e-4
    grad_clip: float = 2.0
    seed: int = 0
    train_instances: int = 0  # 0 = fresh instances every collection step
    val_instances: int = 500
    checkpoint_every: int = 1


@dataclass
class ExperimentConfig:
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    qsim: QsimConfig = field(default_factory=QsimConfig)


_SECTIONS = {
    "instance": InstanceConfig,
    "encoder": EncoderConfig,
    "decoder": DecoderConfig,
    "critic": CriticConfig,
    "ppo": PpoConfig,
    "qsim": QsimConfig,
}


def config_from_dict(doc):
    """Build a config from a nested dict, rejecting unknown fields."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config document must be a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTIONS.items():
        sub = doc.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigurationError(f"section {section!r} must be an object")
        names = {f.name for f in dataclasses.fields(cls)}
        for key in sub:
            if key not in names:
                raise ConfigurationError(f"unknown field {section}.{key}")
        kwargs[section] = cls(**sub)
    cfg = ExperimentConfig(**kwargs)
    validate_config(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def _require(cond, message):
    if not cond:
        raise ConfigurationError(message)


def validate_config(cfg):
    ins, enc, dec, cri, ppo, qs = (cfg.instance, cfg.encoder, cfg.decoder,
                                   cfg.critic, cfg.ppo, cfg.qsim)
    _require(ins.m >= 1, f"instance.m must be >= 1, got {ins.m}")
    if ins.capacity is not None:
        _require(ins.capacity >= 9, f"instance.capacity must be >= 9, got {ins.capacity}")
    _require(enc.d_x >= 1, f"encoder.d_x must be >= 1, got {enc.d_x}")
    _require(enc.n_layers >= 1, f"encoder.n_layers must be >= 1, got {enc.n_layers}")
    _require(enc.variant in ("quantum", "classical"),
             f"encoder.variant must be quantum or classical, got {enc.variant!r}")
    if enc.score_dim is not None:
        _require(enc.score_dim >= 1, f"encoder.score_dim must be >= 1, got {enc.score_dim}")
    _require(enc.score_blocks >= 1,
             f"encoder.score_blocks must be >= 1, got {enc.score_blocks}")
    _require(enc.value_blocks >= 1,
             f"encoder.value_blocks must be >= 1, got {enc.value_blocks}")
    _require(1 <= qs.n_qubits <= MAX_QUBITS,
             f"qsim.n_qubits must be in 1..{MAX_QUBITS}, got {qs.n_qubits}")
    _require(qs.n_layers >= 0, f"qsim.n_layers must be >= 0, got {qs.n_layers}")
    _require(qs.entangler == "ring",
             f"qsim.entangler supports only 'ring', got {qs.entangler!r}")
    _require(dec.heads >= 1, f"decoder.heads must be >= 1, got {dec.heads}")
    _require(enc.d_x % dec.heads == 0,
             f"decoder.heads ({dec.heads}) must divide encoder.d_x ({enc.d_x})")
    _require(dec.clip > 0, f"decoder.clip must be positive, got {dec.clip}")
    if dec.temperature is not None:
        _require(dec.temperature > 0,
                 f"decoder.temperature must be positive, got {dec.temperature}")
    _require(dec.strategy in ("greedy", "sampling", "both"),
             f"decoder.strategy must be greedy, sampling, or both, got {dec.strategy!r}")
    _require(dec.sample_width >= 1,
             f"decoder.sample_width must be >= 1, got {dec.sample_width}")
    _require(cri.readout_layers >= 0,
             f"critic.readout_layers must be >= 0, got {cri.readout_layers}")
    _require(cri.conv_channels >= 1,
             f"critic.conv_channels must be >= 1, got {cri.conv_channels}")
    _require(cri.conv_width >= 1, f"critic.conv_width must be >= 1, got {cri.conv_width}")
    _require(cri.conv_width <= ins.m + 1,
             f"critic.conv_width ({cri.conv_width}) exceeds node count {ins.m + 1}")
    _require(ppo.epochs >= 1, f"ppo.epochs must be >= 1, got {ppo.epochs}")
    _require(ppo.collect_steps >= 1,
             f"ppo.collect_steps must be >= 1, got {ppo.collect_steps}")
    _require(ppo.collect_batch >= 2,
             f"ppo.collect_batch must be >= 2, got {ppo.collect_batch}")
    _require(ppo.update_epochs >= 1,
             f"ppo.update_epochs must be >= 1, got {ppo.update_epochs}")
    _require(ppo.minibatch >= 2, f"ppo.minibatch must be >= 2, got {ppo.minibatch}")
    _require(0 < ppo.clip_eps < 1,
             f"ppo.clip_eps must lie in (0, 1), got {ppo.clip_eps}")
    for name in ("policy_weight", "value_weight", "entropy_weight"):
        _require(getattr(ppo, name) >= 0, f"ppo.{name} must be >= 0")
    _require(ppo.learning_rate > 0,
             f"ppo.learning_rate must be positive, got {ppo.learning_rate}")
    _require(ppo.grad_clip > 0, f"ppo.grad_clip must be positive, got {ppo.grad_clip}")
    _require(ppo.train_instances >= 0,
             f"ppo.train_instances must be >= 0, got {ppo.train_instances}")
    _require(ppo.val_instances >= 1,
             f"ppo.val_instances must be >= 1, got {ppo.val_instances}")
    _require(ppo.checkpoint_every >= 1,
             f"ppo.checkpoint_every must be >= 1, got {ppo.checkpoint_every}")
    return cfg


def resolve_config(cfg):
    """Fill every defaulted-on-None field with its concrete value."""
    from .decoder import default_temperature  # local to avoid a cycle

    cfg = dataclasses.replace(
        cfg,
        instance=dataclasses.replace(cfg.instance),
        encoder=dataclasses.replace(cfg.encoder),
        decoder=dataclasses.replace(cfg.decoder),
        critic=dataclasses.replace(cfg.critic),
        ppo=dataclasses.replace(cfg.ppo),
        qsim=dataclasses.replace(cfg.qsim),
    )
    if cfg.instance.capacity is None:
        cfg.instance.capacity = default_capacity(cfg.instance.m)
    if cfg.encoder.score_dim is None:
        cfg.encoder.score_dim = cfg.encoder.d_x
    if cfg.decoder.temperature is None:
        cfg.decoder.temperature = default_temperature(cfg.instance.m)
    validate_config(cfg)
    return cfg


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_hash(cfg):
    """sha256 hex digest of the resolved config document."""
    doc = config_to_dict(resolve_config(cfg))
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode("utf-8")
    ).hexdigest()


def save_resolved_config(cfg, path):
    doc = config_to_dict(resolve_config(cfg))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
