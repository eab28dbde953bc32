"""Model parameters, the shared forward pass and checkpoint serialization.

The same forward path serves training and inference: global embeddings via
the fixed normalized adjacency, interval attention over the recent window,
layered aggregation with the virtual center node, then K-interest
extraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .aggregate import AttnProjs, LayerParams, aggregate_layers, hybrid_embeddings
from .interests import extract_interests
from .recent import interval_attention

CHECKPOINT_MAGIC = b"GIMI-CKPT1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    n_items: int     # item table rows, padding row 0 included
    d: int
    k: int
    l_rec: int
    l_time: int
    n_heads: int
    n_layers: int

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ValueError("embedding dim must be divisible by head count")


class ModelParams:
    """All trainable tensors; padding row 0 of the item table stays zero."""

    def __init__(self, dims: ModelDims, tensors: dict[str, ad.Tensor]):
        self.dims = dims
        self._tensors = tensors
        self.item_table = tensors["item_embeddings"]
        self.interval_table = tensors["interval_embeddings"]
        self.interval_score_w = tensors["interval_score_weight"]
        self.interest_hidden_w = tensors["interest_hidden_weight"]
        self.interest_query_w = tensors["interest_query_weight"]
        self.layers = []
        for li in range(dims.n_layers):
            self.layers.append(LayerParams(
                item=AttnProjs(*(tensors[f"layer{li}.item.{n}"] for n in ("wq", "wk", "wv", "wo"))),
                center=AttnProjs(*(tensors[f"layer{li}.center.{n}"] for n in ("wq", "wk", "wv", "wo"))),
            ))

    @staticmethod
    def tensor_shapes(dims: ModelDims) -> dict[str, tuple]:
        shapes = {
            "item_embeddings": (dims.n_items, dims.d),
            "interval_embeddings": (dims.l_time + 1, dims.d),
            "interval_score_weight": (dims.d, 1),
            "interest_hidden_weight": (4 * dims.d, dims.d),
            "interest_query_weight": (dims.k, 4 * dims.d),
        }
        for li in range(dims.n_layers):
            for role in ("item", "center"):
                for n in ("wq", "wk", "wv", "wo"):
                    shapes[f"layer{li}.{role}.{n}"] = (dims.d, dims.d)
        return shapes

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator,
             dtype=np.float32) -> "ModelParams":
        """Symmetric uniform init with scale 1/sqrt(d), in declaration order."""
        scale = 1.0 / np.sqrt(dims.d)
        tensors = {}
        for name, shape in cls.tensor_shapes(dims).items():
            data = rng.uniform(-scale, scale, size=shape).astype(dtype)
            if name == "item_embeddings":
                data[0] = 0.0
            tensors[name] = ad.Tensor(data, requires_grad=True)
        return cls(dims, tensors)

    def named(self) -> dict[str, ad.Tensor]:
        return dict(self._tensors)

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    @property
    def dtype(self):
        return self.item_table.dtype

    def astype(self, dtype) -> "ModelParams":
        tensors = {n: ad.Tensor(t.data.astype(dtype), requires_grad=True)
                   for n, t in self._tensors.items()}
        return ModelParams(self.dims, tensors)

    def copy(self) -> "ModelParams":
        tensors = {n: ad.Tensor(t.data.copy(), requires_grad=True)
                   for n, t in self._tensors.items()}
        return ModelParams(self.dims, tensors)


def cast_adjacency(a_norm: sp.csr_matrix, dtype) -> sp.csr_matrix:
    """Adjacency in the model dtype; must be symmetric (checked)."""
    if (a_norm != a_norm.T).nnz != 0:
        raise ValueError("normalized adjacency must be symmetric")
    return a_norm.astype(dtype)


def forward_interests(params: ModelParams, a_norm: sp.csr_matrix,
                      item_idx: np.ndarray, buckets: np.ndarray,
                      mask: np.ndarray, dropout_rate: float = 0.0,
                      rng: np.random.Generator | None = None,
                      residual: bool = False,
                      trace: dict | None = None,
                      e_global_override: ad.Tensor | None = None) -> tuple[ad.Tensor, dict]:
    """Window batch -> (interests (B, K, d), aux tensors).

    aux carries the global table (for target/negative lookups), the per-item
    matrix and the interest attention. ``e_global_override`` substitutes a
    precomputed global table (it then acts as an independent leaf).
    """
    dims = params.dims
    if e_global_override is not None:
        e_global = e_global_override
    else:
        e_global = ad.spmm(a_norm, a_norm, params.item_table)     # (V, d)
    global_rows = ad.gather(e_global, item_idx)                   # (B, L, d)
    e_time = interval_attention(buckets, params.interval_table,
                                params.interval_score_w, mask, trace=trace)
    hybrid = hybrid_embeddings(global_rows, e_time, mask)
    e_user, center = aggregate_layers(
        hybrid, global_rows, params.layers, dims.n_heads, mask,
        dropout_rate=dropout_rate, rng=rng, residual=residual, trace=trace)
    interests, attn = extract_interests(
        e_user, params.interest_hidden_w, params.interest_query_w, mask,
        trace=trace)
    return interests, {"e_global": e_global, "e_user": e_user,
                       "center": center, "interest_attn": attn}


# ---------------------------------------------------------------------------
# checkpoint container: magic "GIMI-CKPT1", then little-endian
#   u32 version,
#   i64[7] dims (n_items, d, K, L_rec, L_time, H, L_layer),
#   u32 tensor_count,
#   per tensor: u32 name_len, name bytes (utf-8), u32 ndim, i64[ndim] shape,
#               f32[] row-major values

def save_checkpoint(path: str | Path, params: ModelParams) -> None:
    d = params.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint32(CHECKPOINT_VERSION).astype("<u4").tobytes())
        fh.write(np.array([d.n_items, d.d, d.k, d.l_rec, d.l_time,
                           d.n_heads, d.n_layers], dtype="<i8").tobytes())
        named = params.named()
        fh.write(np.uint32(len(named)).astype("<u4").tobytes())
        for name, tensor in named.items():
            raw = name.encode("utf-8")
            fh.write(np.uint32(len(raw)).astype("<u4").tobytes())
            fh.write(raw)
            arr = np.ascontiguousarray(tensor.data, dtype="<f4")
            fh.write(np.uint32(arr.ndim).astype("<u4").tobytes())
            fh.write(np.array(arr.shape, dtype="<i8").tobytes())
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path, dtype=np.float32) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    pos = len(CHECKPOINT_MAGIC)

    def read(dt: str, count: int):
        nonlocal pos
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    version = int(read("<u4", 1)[0])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    dims = ModelDims(*(int(x) for x in read("<i8", 7)))
    tensors = {}
    for _ in range(int(read("<u4", 1)[0])):
        name_len = int(read("<u4", 1)[0])
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        ndim = int(read("<u4", 1)[0])
        shape = tuple(int(x) for x in read("<i8", ndim))
        data = read("<f4", int(np.prod(shape))).reshape(shape).astype(dtype)
        tensors[name] = ad.Tensor(data, requires_grad=True)
    expected = set(ModelParams.tensor_shapes(dims))
    if set(tensors) != expected:
        raise ValueError("checkpoint tensor names do not match model dims")
    return ModelParams(dims, tensors)
