import struct

import numpy as np
import pytest

from radapt.errors import ConfigError, DataError, OptimStateError
from radapt.nn import (
    ADAPT_PHASE,
    NetworkConfig,
    add_domain_branch,
    backward,
    fingerprint,
    forward,
    freeze_mask,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from radapt.optim import adam_step, init_adam

CFG = NetworkConfig(in_channels=2, block_channels=(3, 4), head_hidden=5)


def trained_model(seed=0):
    model = init_model(CFG, seed)
    rng = np.random.default_rng(seed + 1)
    for _ in range(3):
        forward(model, rng.standard_normal((2, 2, 8, 8)).astype(np.float32), "source", train=True)
    add_domain_branch(model, "night")
    forward(model, rng.standard_normal((2, 2, 8, 8)).astype(np.float32), "night", train=True)
    return model


class TestRoundTrip:
    def test_model_bits_survive(self, tmp_path):
        model = trained_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        loaded, opt = load_checkpoint(path)
        assert opt is None
        assert fingerprint(loaded, stats=True) == fingerprint(model, stats=True)
        assert loaded.domains == model.domains
        assert loaded.source_domain == model.source_domain
        assert loaded.config == model.config

    def test_eval_logits_bitwise_equal_after_reload(self, tmp_path):
        model = trained_model(3)
        x = np.random.default_rng(9).standard_normal((4, 2, 8, 8)).astype(np.float32)
        want, _ = forward(model, x, "night", train=False)
        save_checkpoint(tmp_path / "m.ckpt", model)
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        got, _ = forward(loaded, x, "night", train=False)
        np.testing.assert_array_equal(want, got)

    def test_optimizer_state_survives(self, tmp_path):
        model = trained_model(5)
        mask = freeze_mask(model, ADAPT_PHASE, "night")
        state = init_adam(model, mask, lr=5e-5)
        rng = np.random.default_rng(11)
        for _ in range(4):
            x = rng.standard_normal((2, 2, 8, 8)).astype(np.float32)
            _, trace = forward(model, x, "night", train=True)
            adam_step(model, backward(model, trace, rng.standard_normal((2, 5))), state)
        save_checkpoint(tmp_path / "m.ckpt", model, state)
        _, loaded = load_checkpoint(tmp_path / "m.ckpt")
        assert loaded.step == state.step
        assert loaded.mask == state.mask
        assert (loaded.lr, loaded.beta1, loaded.beta2, loaded.eps) == (
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
        )
        for pid in state.mask:
            np.testing.assert_array_equal(loaded.m[pid], state.m[pid])
            np.testing.assert_array_equal(loaded.v[pid], state.v[pid])

    def test_resumed_training_matches_uninterrupted(self, tmp_path):
        def steps(model, state, rng, n):
            for _ in range(n):
                x = rng.standard_normal((2, 2, 8, 8)).astype(np.float32)
                _, trace = forward(model, x, "night", train=True)
                adam_step(model, backward(model, trace, rng.standard_normal((2, 5))), state)

        straight = trained_model(7)
        st_a = init_adam(straight, freeze_mask(straight, ADAPT_PHASE, "night"), lr=5e-5)
        steps(straight, st_a, np.random.default_rng(1), 6)

        resumed = trained_model(7)
        st_b = init_adam(resumed, freeze_mask(resumed, ADAPT_PHASE, "night"), lr=5e-5)
        rng = np.random.default_rng(1)
        steps(resumed, st_b, rng, 3)
        save_checkpoint(tmp_path / "mid.ckpt", resumed, st_b)
        resumed2, st_c = load_checkpoint(tmp_path / "mid.ckpt")
        steps(resumed2, st_c, rng, 3)

        assert fingerprint(resumed2, stats=True) == fingerprint(straight, stats=True)

    def test_saving_is_deterministic(self, tmp_path):
        model = trained_model(13)
        save_checkpoint(tmp_path / "a.ckpt", model)
        save_checkpoint(tmp_path / "b.ckpt", model)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


class TestRejection:
    def test_float64_model_refused(self, tmp_path):
        cfg64 = NetworkConfig(in_channels=2, block_channels=(3,), head_hidden=4, dtype="float64")
        with pytest.raises(ConfigError):
            save_checkpoint(tmp_path / "m.ckpt", init_model(cfg64, 0))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, trained_model())
        blob = bytearray(path.read_bytes())
        blob[:8] = b"NOTACKPT"
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, trained_model())
        blob = bytearray(path.read_bytes())
        blob[8:12] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="version"):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, trained_model())
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 10])
        with pytest.raises(DataError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, trained_model())
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(DataError, match="trailing"):
            load_checkpoint(path)

    def test_corrupt_header_json(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, trained_model())
        blob = bytearray(path.read_bytes())
        (hlen,) = struct.unpack("<I", blob[12:16])
        blob[16 : 16 + hlen] = b"{" * hlen
        path.write_bytes(bytes(blob))
        with pytest.raises(DataError, match="header"):
            load_checkpoint(path)

    def test_foreign_optimizer_slot_refused_at_save(self, tmp_path):
        model = trained_model()
        state = init_adam(model, ["head.fc1.bias"], lr=1e-4)
        state.mask = ("head.fc1.bias", "ghost.weight")
        state.m["ghost.weight"] = np.zeros(1, dtype=np.float32)
        state.v["ghost.weight"] = np.zeros(1, dtype=np.float32)
        with pytest.raises(OptimStateError):
            save_checkpoint(tmp_path / "m.ckpt", model, state)
