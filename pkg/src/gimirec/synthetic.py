"""Synthetic interaction logs with planted cluster structure.

Each user is drawn to two item clusters and walks each cluster's item ring
from a private random offset, session by session, without replacement:
held-out continuations are unseen-but-in-cluster and sit just ahead of the
user's frontier, while global cluster-item counts stay flat (popularity
carries no signal about a specific user's future). Background noise has two
components: a small globally hot set everyone revisits (it owns the raw
popularity ranking but is almost always already in a user's own history)
and a flat long-tail pool that widens the candidate set so top-N retrieval
against the planted structure is non-trivial.

Within-session gaps are short (strong interval signal), sessions are days
apart, and noise items land mid-gap between sessions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import InteractionRecord

DAY = 86400.0


@dataclass
class PlantedConfig:
    n_clusters: int = 4
    items_per_cluster: int = 40
    n_users: int = 500
    n_hot_items: int = 30
    hot_per_session: float = 1.3       # Poisson rate
    hot_favorites: int = 4             # per-user staple subset of the hot set
    hot_favorite_bias: float = 0.9     # share of hot draws from the staples
    n_tail_items: int = 400
    tail_per_session: float = 0.8      # Poisson rate
    lookahead: int = 3                 # ring-walk jitter window
    session_len: tuple[int, int] = (4, 8)
    cluster_draw_frac: tuple[float, float] = (0.72, 0.90)
    within_gap_days: tuple[float, float] = (0.02, 0.15)
    session_gap_days: tuple[float, float] = (2.0, 8.0)
    start_window_days: float = 60.0


def planted_cluster_records(cfg: PlantedConfig | None = None,
                            seed: int = 0) -> list[InteractionRecord]:
    cfg = cfg or PlantedConfig()
    rng = np.random.default_rng(seed)
    cluster_items = [[f"c{c}_{j}" for j in range(cfg.items_per_cluster)]
                     for c in range(cfg.n_clusters)]
    hot_names = [f"hot_{j}" for j in range(cfg.n_hot_items)]
    tail_names = [f"tail_{j}" for j in range(cfg.n_tail_items)]
    records: list[InteractionRecord] = []

    for u in range(cfg.n_users):
        user = f"u{u:04d}"
        pair = rng.choice(cfg.n_clusters, size=2, replace=False)
        favorites = rng.choice(cfg.n_hot_items, size=cfg.hot_favorites,
                               replace=False)
        # private ring offset per cluster; items are consumed roughly in ring
        # order with a small lookahead jitter, never twice
        decks = []
        for c in pair:
            offset = int(rng.integers(cfg.items_per_cluster))
            ring = cluster_items[c][offset:] + cluster_items[c][:offset]
            decks.append(ring)
        deck_size = 2 * cfg.items_per_cluster
        n_draws = int(deck_size * rng.uniform(*cfg.cluster_draw_frac))
        t = rng.uniform(0.0, cfg.start_window_days) * DAY
        drawn = 0
        turn = int(rng.integers(2))
        while drawn < n_draws:
            deck = decks[turn] if decks[turn] else decks[1 - turn]
            turn = 1 - turn
            if not deck:
                break
            slen = int(rng.integers(cfg.session_len[0], cfg.session_len[1] + 1))
            for _ in range(min(slen, len(deck), n_draws - drawn)):
                pick = int(rng.integers(min(cfg.lookahead, len(deck))))
                records.append(InteractionRecord(user, deck.pop(pick), int(t)))
                drawn += 1
                t += rng.uniform(*cfg.within_gap_days) * DAY
            gap = rng.uniform(*cfg.session_gap_days) * DAY
            n_hot = int(rng.poisson(cfg.hot_per_session))
            n_tail = int(rng.poisson(cfg.tail_per_session))
            if n_hot or n_tail:
                names = []
                for _ in range(n_hot):
                    if rng.random() < cfg.hot_favorite_bias:
                        names.append(hot_names[int(favorites[rng.integers(cfg.hot_favorites)])])
                    else:
                        names.append(hot_names[int(rng.integers(cfg.n_hot_items))])
                names += [tail_names[int(j)]
                          for j in rng.integers(cfg.n_tail_items, size=n_tail)]
                fracs = np.sort(rng.uniform(0.25, 0.75, size=len(names)))
                for frac, name in zip(fracs, names):
                    records.append(InteractionRecord(user, name, int(t + gap * frac)))
            t += gap
    return records


def write_log(path: str | Path, records: list[InteractionRecord],
              delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.user}{delimiter}{r.item}{delimiter}{r.timestamp}\n")
