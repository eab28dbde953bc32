"""Parameter container, shared forward pass and checkpoint format."""

import numpy as np
import pytest

from gimirec import autodiff as ad
from gimirec.model import (CHECKPOINT_MAGIC, ModelDims, ModelParams,
                           cast_adjacency, forward_interests, load_checkpoint,
                           save_checkpoint)

DIMS = ModelDims(n_items=9, d=8, k=2, l_rec=4, l_time=6, n_heads=2, n_layers=2)


def fresh_params(seed=0, dtype=np.float64):
    return ModelParams.init(DIMS, np.random.default_rng(seed), dtype=dtype)


class TestModelParams:
    def test_shapes(self):
        params = fresh_params()
        named = params.named()
        assert named["item_embeddings"].shape == (9, 8)
        assert named["interval_embeddings"].shape == (7, 8)
        assert named["interval_score_weight"].shape == (8, 1)
        assert named["interest_hidden_weight"].shape == (32, 8)
        assert named["interest_query_weight"].shape == (2, 32)
        assert named["layer1.center.wo"].shape == (8, 8)
        assert len(named) == 5 + 2 * 2 * 4

    def test_padding_row_zero_and_scale(self):
        params = fresh_params()
        table = params.item_table.data
        assert np.all(table[0] == 0.0)
        assert np.abs(table[1:]).max() <= 1.0 / np.sqrt(8)

    def test_same_seed_same_init(self):
        a, b = fresh_params(3), fresh_params(3)
        for (na, ta), (nb, tb) in zip(a.named().items(), b.named().items()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_head_divisibility_enforced(self):
        with pytest.raises(ValueError):
            ModelDims(n_items=5, d=6, k=2, l_rec=3, l_time=4, n_heads=4,
                      n_layers=1)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = fresh_params(dtype=np.float32)
        path = tmp_path / "checkpoint.bin"
        save_checkpoint(path, params)
        assert path.read_bytes()[:10] == CHECKPOINT_MAGIC
        loaded = load_checkpoint(path)
        assert loaded.dims == DIMS
        for name, tensor in params.named().items():
            np.testing.assert_array_equal(loaded.named()[name].data,
                                          tensor.data)

    def test_float64_params_serialize_as_f32(self, tmp_path):
        params = fresh_params(dtype=np.float64)
        path = tmp_path / "checkpoint.bin"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path, dtype=np.float64)
        np.testing.assert_array_equal(
            loaded.item_table.data,
            params.item_table.data.astype(np.float32).astype(np.float64))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"WRONG-MAGIC!" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)


class TestForward:
    def test_shapes_and_determinism(self, tiny_adjacency):
        params = fresh_params()
        rng = np.random.default_rng(1)
        items = rng.integers(0, 9, size=(3, 4))
        buckets = rng.integers(0, 7, size=(3, 4, 4))
        mask = np.ones((3, 4), dtype=bool)
        items[mask == 0] = 0
        a = cast_adjacency(tiny_adjacency.a_norm, np.float64)
        out1, aux = forward_interests(params, a, items, buckets, mask)
        out2, _ = forward_interests(params, a, items, buckets, mask)
        assert out1.shape == (3, 2, 8)
        assert aux["e_user"].shape == (3, 4, 8)
        np.testing.assert_array_equal(out1.data, out2.data)

    def test_forward_accepts_float32(self, tiny_adjacency):
        params = fresh_params(dtype=np.float32)
        a = cast_adjacency(tiny_adjacency.a_norm, np.float32)
        items = np.array([[0, 1, 2, 3]])
        buckets = np.zeros((1, 4, 4), dtype=np.int64)
        mask = np.array([[False, True, True, True]])
        out, _ = forward_interests(params, a, items, buckets, mask)
        assert out.dtype == np.float32

    def test_asymmetric_adjacency_rejected(self):
        import scipy.sparse as sp
        bad = sp.csr_matrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="symmetric"):
            cast_adjacency(bad, np.float64)
