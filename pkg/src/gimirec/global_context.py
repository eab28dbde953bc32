"""Global co-occurrence context.

Scans every training user's full history once, accumulating interval-weighted
1/2/3-hop item-pair weights, combines the symmetrized hop matrices into a
weighted adjacency with unit diagonal, normalizes it symmetrically and
produces global item embeddings with a single sparse-dense product.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .ingest import UserSequence

HOPS = (1, 2, 3)

ADJACENCY_MAGIC = b"GIMI-ADJ1"


class AblationVariant(str, enum.Enum):
    """Progressive removal of interval weighting, counts and the threshold."""

    FULL = "full"
    NO_I = "no_I"      # per-occurrence weight 1: counts only
    NO_IN = "no_IN"    # accumulated weight clamped to 1: presence only
    NO_INT = "no_INT"  # presence only and no time-interval threshold

    @property
    def uses_interval_weight(self) -> bool:
        return self is AblationVariant.FULL

    @property
    def uses_counts(self) -> bool:
        return self in (AblationVariant.FULL, AblationVariant.NO_I)

    @property
    def uses_threshold(self) -> bool:
        return self is not AblationVariant.NO_INT


@dataclass
class HopPairAccumulator:
    """Per-hop sparse maps (item, item) -> accumulated occurrence weight."""

    weights: dict[int, dict[tuple[int, int], float]]
    a: float
    b: float
    l_time: float
    variant: AblationVariant
    occurrences: int = 0
    total_interactions: int = 0
    config: dict = field(default_factory=dict)

    def max_index(self) -> int:
        top = 0
        for d in self.weights.values():
            for mu, nu in d:
                top = max(top, mu, nu)
        return top


def occurrence_weight(delta_t, a: float, b: float, l_time: float):
    """Linear interval weight a*(L-dt)/L + b; 1 at dt=0, b at dt=L."""
    dt = np.asarray(delta_t, dtype=np.float64)
    if np.any(dt < 0) or np.any(dt > l_time):
        raise ValueError("delta_t outside [0, L_time]; caller must filter")
    out = a * (l_time - dt) / l_time + b
    return float(out) if np.isscalar(delta_t) else out


def extract_hop_pairs(sequences: list[UserSequence], variant: AblationVariant,
                      a: float, b: float, l_time: float,
                      time_unit_seconds: int = 86400,
                      allow_self_pairs: bool = True) -> HopPairAccumulator:
    """Accumulate 1/2/3-hop ordered pair weights over full user histories.

    An ordered pair (items[n], items[n+k]) qualifies when its interval,
    converted to time units, is <= l_time (always, for the no_INT variant).
    Accumulation order is (user, hop, position), so sums are reproducible
    bit for bit.
    """
    if a < 0 or b < 0 or abs(a + b - 1.0) > 1e-9:
        raise ValueError(f"interval weights need a+b=1, a,b>=0 (a={a}, b={b})")
    weights: dict[int, dict[tuple[int, int], float]] = {k: {} for k in HOPS}
    occurrences = 0
    total = 0
    for seq in sequences:
        items = seq.items
        ts = seq.timestamps
        n = len(items)
        total += n
        for k in HOPS:
            if n <= k:
                continue
            mu = items[:-k]
            nu = items[k:]
            dt = (ts[k:] - ts[:-k]).astype(np.float64) / time_unit_seconds
            keep = dt <= l_time if variant.uses_threshold else np.ones(len(dt), dtype=bool)
            if not allow_self_pairs:
                keep &= mu != nu
            if not np.any(keep):
                continue
            if variant.uses_interval_weight:
                w = occurrence_weight(dt[keep], a, b, l_time)
            else:
                w = np.ones(int(keep.sum()), dtype=np.float64)
            dk = weights[k]
            for m, v, wi in zip(mu[keep].tolist(), nu[keep].tolist(), w.tolist()):
                key = (m, v)
                dk[key] = dk.get(key, 0.0) + wi
            occurrences += int(keep.sum())
    if not variant.uses_counts:
        for dk in weights.values():
            for key in dk:
                dk[key] = 1.0
    return HopPairAccumulator(
        weights=weights, a=a, b=b, l_time=l_time, variant=variant,
        occurrences=occurrences, total_interactions=total,
        config={"time_unit_seconds": time_unit_seconds,
                "allow_self_pairs": allow_self_pairs},
    )


@dataclass
class NormalizedAdjacency:
    """Weighted co-occurrence adjacency with its symmetric normalization.

    Row/column 0 is the padding slot and stays an identity row, so padding
    embeddings pass through the graph convolution unchanged.
    """

    a_prime: sp.csr_matrix
    degree: np.ndarray
    a_norm: sp.csr_matrix
    alpha: float
    beta: float
    gamma: float


def build_weighted_adjacency(acc: HopPairAccumulator, alpha: float, beta: float,
                             gamma: float, num_items: int) -> NormalizedAdjacency:
    """Symmetrize each hop map, combine with identity, normalize.

    A^k[r,c] = q^k[r,c] + q^k[c,r];  A' = I + alpha A^1 + beta A^2 + gamma A^3;
    a_norm = D^-1/2 A' D^-1/2 with D the diagonal of row sums. Off-diagonal
    values are computed once per unordered pair and stored for both
    orientations, so A' (and a_norm) are symmetric bit for bit.
    """
    if num_items < acc.max_index():
        raise ValueError("num_items smaller than the largest accumulated index")
    size = num_items + 1  # padding row 0 included

    combined: dict[tuple[int, int], float] = {}
    for hop_weight, k in zip((alpha, beta, gamma), HOPS):
        sym: dict[tuple[int, int], float] = {}
        for (m, v), q in acc.weights[k].items():
            key = (m, v) if m <= v else (v, m)
            sym[key] = sym.get(key, 0.0) + q
        for key, q in sym.items():
            # off-diagonal A^k entries are q_mv + q_vm; the diagonal sees each
            # self-pair occurrence once, so double it to match q_ii + q_ii
            a_entry = 2.0 * q if key[0] == key[1] else q
            combined[key] = combined.get(key, 0.0) + hop_weight * a_entry

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i in range(size):
        rows.append(i)
        cols.append(i)
        vals.append(1.0 + combined.pop((i, i), 0.0))
    for (r, c), v in sorted(combined.items()):
        rows.extend((r, c))
        cols.extend((c, r))
        vals.extend((v, v))

    rows_a = np.asarray(rows, dtype=np.int64)
    cols_a = np.asarray(cols, dtype=np.int64)
    vals_a = np.asarray(vals, dtype=np.float64)
    a_prime = sp.csr_matrix((vals_a, (rows_a, cols_a)), shape=(size, size))
    a_prime.sort_indices()

    degree = np.asarray(a_prime.sum(axis=1)).ravel()
    assert np.all(degree > 0), "zero row sum impossible with unit diagonal"
    d_inv_sqrt = 1.0 / np.sqrt(degree)
    # d[r]*d[c] first, then times the shared pair value: keeps bit symmetry
    norm_vals = vals_a * (d_inv_sqrt[rows_a] * d_inv_sqrt[cols_a])
    a_norm = sp.csr_matrix((norm_vals, (rows_a, cols_a)), shape=(size, size))
    a_norm.sort_indices()
    return NormalizedAdjacency(a_prime, degree, a_norm, alpha, beta, gamma)


def global_embeddings(a_norm: sp.csr_matrix, item_table: np.ndarray) -> np.ndarray:
    """One-hop graph convolution: normalized adjacency times the item table."""
    if a_norm.shape[1] != item_table.shape[0]:
        raise ValueError("adjacency and item table dimensions disagree")
    return a_norm @ item_table


# ---------------------------------------------------------------------------
# exported container: magic "GIMI-ADJ1", then little-endian
#   i64 n_rows, i64 n_cols, i64 nnz,
#   i64[n_rows+1] indptr, i64[nnz] indices, f64[nnz] values  (CSR, a_norm)

def write_adjacency(path: str | Path, adj: NormalizedAdjacency) -> None:
    m = adj.a_norm.tocsr()
    m.sort_indices()
    with open(path, "wb") as fh:
        fh.write(ADJACENCY_MAGIC)
        fh.write(np.array([m.shape[0], m.shape[1], m.nnz], dtype="<i8").tobytes())
        fh.write(m.indptr.astype("<i8").tobytes())
        fh.write(m.indices.astype("<i8").tobytes())
        fh.write(m.data.astype("<f8").tobytes())


def read_adjacency(path: str | Path) -> sp.csr_matrix:
    raw = Path(path).read_bytes()
    if raw[:len(ADJACENCY_MAGIC)] != ADJACENCY_MAGIC:
        raise ValueError(f"{path}: not an adjacency container (bad magic)")
    pos = len(ADJACENCY_MAGIC)

    def read(dtype: str, count: int):
        nonlocal pos
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr

    n_rows, n_cols, nnz = (int(x) for x in read("<i8", 3))
    indptr = read("<i8", n_rows + 1).astype(np.int64)
    indices = read("<i8", nnz).astype(np.int64)
    data = read("<f8", nnz).astype(np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(n_rows, n_cols))


def write_global_embeddings(path: str | Path, emb: np.ndarray) -> None:
    """Raw row-major float32 matrix, one row per item table row."""
    np.ascontiguousarray(emb, dtype="<f4").tofile(path)
