"""Exact top-N retrieval, ranking metrics and the 80/20 evaluation protocol.

Retrieval scores every candidate item against all K interests and keeps the
max (full scan, no approximate index). Held-out users are evaluated by
inferring interests from the first 80% of their history and scoring the
remaining 20% as ground truth.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .ingest import UserSequence
from .model import ModelParams, forward_interests
from .recent import make_window, stack_windows

_EVAL_CHUNK = 256


@dataclass
class MetricRow:
    recall: float
    ndcg: float
    hit_rate: float


@dataclass
class MetricsReport:
    per_n: dict[int, MetricRow]
    user_count: int

    def to_dict(self) -> dict:
        return {
            "user_count": self.user_count,
            "metrics": {str(n): {"recall": row.recall, "ndcg": row.ndcg,
                                 "hit_rate": row.hit_rate}
                        for n, row in sorted(self.per_n.items())},
        }


def metrics(recommended, ground_truth: set, n: int) -> tuple[float, float, float]:
    """(recall, ndcg, hit) for one ranked list against a non-empty truth set.

    Binary relevance; ideal DCG runs over min(n, |truth|) slots; ranks are
    1-based.
    """
    if not ground_truth:
        raise ValueError("ground truth must be non-empty")
    recommended = list(recommended)[:n]
    hit_ranks = [r for r, item in enumerate(recommended, start=1)
                 if item in ground_truth]
    recall = len(hit_ranks) / len(ground_truth)
    hit = 1.0 if hit_ranks else 0.0
    dcg = sum(1.0 / np.log2(r + 1) for r in hit_ranks)
    idcg = sum(1.0 / np.log2(r + 1)
               for r in range(1, min(n, len(ground_truth)) + 1))
    return recall, dcg / idcg, hit


def top_n(interest_vectors: np.ndarray, e_global: np.ndarray, n: int,
          exclude: set | None = None) -> np.ndarray:
    """Exact max-inner-product scan over all items.

    Each item's score is the max over the K interests; padding and excluded
    items never appear; ties rank the smaller index first.
    """
    exclude = exclude or set()
    vectors = np.atleast_2d(interest_vectors)
    scores = (e_global @ vectors.T).max(axis=1)
    scores[0] = -np.inf
    if exclude:
        scores[np.fromiter(exclude, dtype=np.int64)] = -np.inf
    candidates = e_global.shape[0] - 1 - len(exclude)
    if n > candidates:
        raise ValueError(f"cannot rank {n} items from {candidates} candidates")
    return np.argsort(-scores, kind="stable")[:n]


def compute_global_table(params: ModelParams, a_norm: sp.csr_matrix) -> np.ndarray:
    """Global item embeddings from the current table (forward only)."""
    return a_norm @ params.item_table.data


def infer_interests(seq: UserSequence, prefix_len: int, params: ModelParams,
                    a_norm: sp.csr_matrix, time_unit_seconds: int = 86400,
                    residual: bool = False) -> np.ndarray:
    """Interest matrix for one user from the first ``prefix_len`` interactions."""
    if prefix_len < 1:
        raise ValueError("prefix must contain at least one interaction")
    dims = params.dims
    window = make_window(seq, prefix_len + 1, dims.l_rec)
    items, buckets, mask = stack_windows([window], dims.l_time, time_unit_seconds)
    with ad.no_grad():
        interests, _ = forward_interests(params, a_norm, items, buckets, mask,
                                         residual=residual)
    return interests.data[0]


def _batched_interests(seqs: list[UserSequence], prefix_lens: list[int],
                       params: ModelParams, a_norm: sp.csr_matrix,
                       time_unit_seconds: int, residual: bool) -> np.ndarray:
    dims = params.dims
    windows = [make_window(s, p + 1, dims.l_rec)
               for s, p in zip(seqs, prefix_lens)]
    items, buckets, mask = stack_windows(windows, dims.l_time, time_unit_seconds)
    with ad.no_grad():
        interests, _ = forward_interests(params, a_norm, items, buckets, mask,
                                         residual=residual)
    return interests.data


def evaluate(sequences: list[UserSequence], user_indices: np.ndarray,
             params: ModelParams, a_norm: sp.csr_matrix,
             n_list: tuple[int, ...] = (20, 50), time_unit_seconds: int = 86400,
             residual: bool = False, exclude_prefix: bool = True,
             threads: int = 1) -> MetricsReport:
    """80/20 protocol over the given users.

    Per user: prefix = first floor(0.8 N) interactions (integer arithmetic),
    ground truth = the rest; users with empty ground truth are skipped.
    Prefix items are excluded from the candidate pool.
    """
    jobs = []
    for u in user_indices:
        seq = sequences[int(u)]
        n_int = len(seq)
        prefix = (8 * n_int) // 10
        if prefix < 1:
            continue
        truth = set(seq.items[prefix:].tolist())
        if not truth:
            continue
        jobs.append((seq, prefix, truth))
    if not jobs:
        return MetricsReport({n: MetricRow(0.0, 0.0, 0.0) for n in n_list}, 0)

    e_global = compute_global_table(params, a_norm)
    n_max = max(n_list)
    chunks = [jobs[i:i + _EVAL_CHUNK] for i in range(0, len(jobs), _EVAL_CHUNK)]

    def run_chunk(chunk):
        interests = _batched_interests(
            [j[0] for j in chunk], [j[1] for j in chunk], params, a_norm,
            time_unit_seconds, residual)
        rows = []
        for (seq, prefix, truth), vecs in zip(chunk, interests):
            exclude = set(seq.items[:prefix].tolist()) if exclude_prefix else set()
            ranked = top_n(vecs, e_global, n_max, exclude)
            rows.append({n: metrics(ranked, truth, n) for n in n_list})
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_user = [row for rows in pool.map(run_chunk, chunks) for row in rows]
    else:
        per_user = [row for chunk in chunks for row in run_chunk(chunk)]

    report = {}
    for n in n_list:
        triples = np.array([row[n] for row in per_user], dtype=np.float64)
        report[n] = MetricRow(*(float(x) for x in triples.mean(axis=0)))
    return MetricsReport(report, len(per_user))


# ---------------------------------------------------------------------------
# reference rankers used as baselines in experiments

def popularity_counts(train_sequences: list[UserSequence], vocab_size: int) -> np.ndarray:
    counts = np.zeros(vocab_size, dtype=np.int64)
    for seq in train_sequences:
        np.add.at(counts, seq.items, 1)
    counts[0] = 0
    return counts


def popularity_top_n(counts: np.ndarray, n: int, exclude: set | None = None) -> np.ndarray:
    scores = counts.astype(np.float64)
    scores[0] = -np.inf
    for idx in exclude or ():
        scores[idx] = -np.inf
    return np.argsort(-scores, kind="stable")[:n]


def random_top_n(rng: np.random.Generator, vocab_size: int, n: int,
                 exclude: set | None = None) -> np.ndarray:
    pool = np.setdiff1d(np.arange(1, vocab_size),
                        np.fromiter(exclude or (), dtype=np.int64))
    return rng.permutation(pool)[:n]


def evaluate_ranker(sequences: list[UserSequence], user_indices: np.ndarray,
                    rank_fn, n_list: tuple[int, ...] = (20,),
                    exclude_prefix: bool = True) -> MetricsReport:
    """Same 80/20 protocol for a plain ranking function (baselines).

    rank_fn(n, exclude) -> ranked item indices.
    """
    rows = []
    for u in user_indices:
        seq = sequences[int(u)]
        prefix = (8 * len(seq)) // 10
        if prefix < 1:
            continue
        truth = set(seq.items[prefix:].tolist())
        if not truth:
            continue
        exclude = set(seq.items[:prefix].tolist()) if exclude_prefix else set()
        ranked = rank_fn(max(n_list), exclude)
        rows.append({n: metrics(ranked, truth, n) for n in n_list})
    if not rows:
        return MetricsReport({n: MetricRow(0.0, 0.0, 0.0) for n in n_list}, 0)
    report = {}
    for n in n_list:
        triples = np.array([row[n] for row in rows], dtype=np.float64)
        report[n] = MetricRow(*(float(x) for x in triples.mean(axis=0)))
    return MetricsReport(report, len(rows))
