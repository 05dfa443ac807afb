"""Config loading and resolution, checkpoint format, state round-trips."""

import dataclasses
import json

import numpy as np
import pytest
import torch

from qroute.checkpoint import (
    EPOCH_KEY,
    FORMAT_VERSION,
    load_checkpoint,
    save_checkpoint,
)
from qroute.config import (
    ExperimentConfig,
    config_from_dict,
    config_hash,
    load_config,
    resolve_config,
    save_resolved_config,
)
from qroute.errors import ConfigurationError, ParseError, ShapeError
from qroute.model import (
    build_model,
    classical_reference,
    count_parameters,
    init_parameters,
    load_state_arrays,
    state_arrays,
)

torch.set_num_threads(1)

TINY = {
    "instance": {"m": 4},
    "encoder": {"d_x": 8, "n_layers": 1, "variant": "classical",
                "score_blocks": 1},
    "decoder": {"heads": 2},
    "critic": {"readout_layers": 1, "conv_channels": 4, "quantum": False},
    "qsim": {"n_qubits": 2, "n_layers": 1},
    "ppo": {"collect_batch": 4, "minibatch": 4, "val_instances": 2},
}


class TestConfigLoading:
    def test_defaults_from_empty_document(self):
        cfg = config_from_dict({})
        assert cfg.encoder.variant == "quantum"
        assert cfg.instance.capacity is None

    def test_unknown_section_and_field(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"nope": {}})
        with pytest.raises(ConfigurationError):
            config_from_dict({"encoder": {"width": 3}})
        with pytest.raises(ConfigurationError):
            config_from_dict({"encoder": 7})
        with pytest.raises(ConfigurationError):
            config_from_dict([])

    def test_validation_catches_bad_values(self):
        for doc in (
            {"instance": {"m": 0}},
            {"instance": {"capacity": 5}},
            {"encoder": {"variant": "analog"}},
            {"encoder": {"d_x": 8}, "decoder": {"heads": 3}},
            {"qsim": {"n_qubits": 0}},
            {"qsim": {"entangler": "mesh"}},
            {"ppo": {"clip_eps": 1.5}},
            {"critic": {"conv_width": 30}},
        ):
            with pytest.raises(ConfigurationError):
                config_from_dict(doc)

    def test_load_config_errors(self, tmp_path):
        missing = tmp_path / "missing.json"
        with pytest.raises(ConfigurationError):
            load_config(missing)
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_config(bad)

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(TINY))
        cfg = load_config(path)
        assert cfg.encoder.d_x == 8
        assert cfg.ppo.collect_batch == 4


class TestResolution:
    def test_fills_none_fields(self):
        cfg = resolve_config(config_from_dict({"instance": {"m": 20}}))
        assert cfg.instance.capacity == 30
        assert cfg.encoder.score_dim == cfg.encoder.d_x
        assert cfg.decoder.temperature == 2.5

    def test_original_not_mutated(self):
        cfg = config_from_dict({"instance": {"m": 50}})
        resolve_config(cfg)
        assert cfg.instance.capacity is None

    def test_explicit_values_kept(self):
        cfg = resolve_config(config_from_dict(
            {"instance": {"m": 20, "capacity": 44},
             "decoder": {"temperature": 0.7}}
        ))
        assert cfg.instance.capacity == 44
        assert cfg.decoder.temperature == 0.7


class TestConfigHash:
    def test_stable_and_sensitive(self):
        a = config_from_dict(TINY)
        b = config_from_dict(TINY)
        assert config_hash(a) == config_hash(b)
        changed = dataclasses.replace(
            a, ppo=dataclasses.replace(a.ppo, seed=999)
        )
        assert config_hash(changed) != config_hash(a)

    def test_resolution_invariant(self):
        # hashing resolves first, so a config and its resolved form agree
        cfg = config_from_dict({"instance": {"m": 20}})
        assert config_hash(cfg) == config_hash(resolve_config(cfg))

    def test_saved_file_reloads_to_same_hash(self, tmp_path):
        cfg = config_from_dict(TINY)
        path = tmp_path / "resolved.json"
        save_resolved_config(cfg, path)
        assert config_hash(load_config(path)) == config_hash(cfg)


class TestCheckpointFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        arrays = {
            "a.weight": rng.standard_normal((3, 4)),
            "b.vec": rng.standard_normal(5),
        }
        path = tmp_path / "model.qgat"
        save_checkpoint(path, arrays, "ab" * 32, 12)
        loaded, hash_hex, epoch = load_checkpoint(path)
        assert hash_hex == "ab" * 32
        assert epoch == 12
        assert sorted(loaded) == sorted(arrays)
        for name in arrays:
            assert np.array_equal(loaded[name], arrays[name])

    def test_bad_hash_length(self, tmp_path):
        with pytest.raises(ValueError):
            save_checkpoint(tmp_path / "x.qgat", {}, "abcd", 1)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.qgat"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "x.qgat"
        save_checkpoint(path, {"w": np.ones((4, 4))}, "00" * 32, 1)
        blob = path.read_bytes()
        path.write_bytes(blob[:-9])
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_trailing_bytes_detected(self, tmp_path):
        path = tmp_path / "x.qgat"
        save_checkpoint(path, {"w": np.ones(2)}, "00" * 32, 1)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_version_gate(self, tmp_path):
        path = tmp_path / "x.qgat"
        save_checkpoint(path, {}, "00" * 32, 1)
        blob = bytearray(path.read_bytes())
        blob[4] = FORMAT_VERSION + 1
        path.write_bytes(bytes(blob))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_epoch_key_reserved(self, tmp_path):
        path = tmp_path / "x.qgat"
        save_checkpoint(path, {EPOCH_KEY: np.array([99.0])}, "00" * 32, 5)
        _, _, epoch = load_checkpoint(path)
        assert epoch == 5


class TestModelState:
    def test_state_round_trip_through_file(self, tmp_path):
        cfg = config_from_dict(TINY)
        model = init_parameters(build_model(cfg), 3)
        path = tmp_path / "model.qgat"
        save_checkpoint(path, state_arrays(model), config_hash(cfg), 4)
        arrays, _, _ = load_checkpoint(path)

        other = build_model(cfg)
        load_state_arrays(other, arrays)
        for (na, pa), (nb, pb) in zip(
                sorted(model.state_dict().items()),
                sorted(other.state_dict().items())):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_mismatched_names_rejected(self):
        cfg = config_from_dict(TINY)
        model = build_model(cfg)
        arrays = state_arrays(model)
        arrays.pop(sorted(arrays)[0])
        with pytest.raises(ShapeError):
            load_state_arrays(model, arrays)
        arrays = state_arrays(model)
        arrays["bogus"] = np.zeros(3)
        with pytest.raises(ShapeError):
            load_state_arrays(model, arrays)

    def test_mismatched_shape_rejected(self):
        cfg = config_from_dict(TINY)
        model = build_model(cfg)
        arrays = state_arrays(model)
        name = sorted(arrays)[0]
        arrays[name] = np.zeros(np.asarray(arrays[name]).size + 1)
        with pytest.raises(ShapeError):
            load_state_arrays(model, arrays)


class TestInitAndCounts:
    def test_same_seed_same_parameters(self):
        cfg = config_from_dict(TINY)
        a = init_parameters(build_model(cfg), 5)
        b = init_parameters(build_model(cfg), 5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
        c = init_parameters(build_model(cfg), 6)
        assert any(not torch.equal(pa, pc)
                   for pa, pc in zip(a.parameters(), c.parameters()))

    def test_angles_in_range_biases_zero(self):
        quantum = dict(TINY)
        quantum["encoder"] = {"d_x": 8, "n_layers": 1, "variant": "quantum",
                              "score_blocks": 1}
        cfg = config_from_dict(quantum)
        model = init_parameters(build_model(cfg), 7)
        saw_theta = False
        for name, p in model.named_parameters():
            if "thetas" in name:
                saw_theta = True
                assert (p.abs() <= np.pi).all()
            elif name.endswith(".bias"):
                assert torch.equal(p, torch.zeros_like(p))
        assert saw_theta

    def test_count_split(self):
        quantum = dict(TINY)
        quantum["encoder"] = {"d_x": 8, "n_layers": 1, "variant": "quantum",
                              "score_blocks": 1}
        cfg = config_from_dict(quantum)
        model = build_model(cfg)
        classical, quantum_n, total = count_parameters(model)
        assert classical + quantum_n == total
        assert quantum_n == sum(p.numel() for n, p in model.named_parameters()
                                if "thetas" in n)
        assert quantum_n > 0

    def test_classical_reference_has_no_quantum_parameters(self):
        cfg = config_from_dict(TINY)
        ref = build_model(classical_reference(cfg))
        _, quantum_n, _ = count_parameters(ref)
        assert quantum_n == 0
