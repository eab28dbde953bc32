"""Variant wiring checks and the ablation runner on a miniature dataset."""

import numpy as np

from gimirec.ablation import (VARIANT_ORDER, compare_variant_matrices,
                              direction_holds, run_ablation, VariantResult)
from gimirec.config import HyperParams
from gimirec.global_context import AblationVariant
from gimirec.ingest import prepare
from gimirec.synthetic import PlantedConfig, planted_cluster_records, write_log


def mini_bundle(tmp_path, seed=4):
    cfg = PlantedConfig(n_clusters=3, items_per_cluster=8, n_users=30,
                        n_hot_items=5, n_tail_items=30,
                        cluster_draw_frac=(0.6, 0.9))
    write_log(tmp_path / "log.csv", planted_cluster_records(cfg, seed=seed))
    bundle, _ = prepare(tmp_path / "log.csv", tmp_path / "bundle", seed=seed)
    return bundle


def test_variant_matrices_differ_only_via_switches(tmp_path):
    bundle = mini_bundle(tmp_path)
    hp = HyperParams(l_time=3).validate()
    wiring = compare_variant_matrices(bundle, hp)
    assert wiring and all(wiring.values()), wiring


def test_run_ablation_covers_all_variants(tmp_path):
    bundle = mini_bundle(tmp_path)
    hp = HyperParams(d=8, k=2, l_rec=6, l_time=3, n_heads=2, n_layers=1,
                     batch=8, neg_samples=4, max_steps=10, eval_every=10,
                     lr=0.01).validate()
    results = run_ablation(bundle, hp, seeds=[0], out_dir=tmp_path / "runs",
                           n_eval=5)
    assert [r.variant for r in results] == list(VARIANT_ORDER)
    for r in results:
        assert 0.0 <= r.recall <= 1.0
        assert len(r.per_seed_recall) == 1
        assert (tmp_path / "runs" / f"{r.variant.value}_seed0"
                / "checkpoint.bin").exists()


def test_direction_holds_logic():
    rows = [VariantResult(v, recall, 0.0, 0.0, [recall])
            for v, recall in zip(VARIANT_ORDER, (0.5, 0.4, 0.3, 0.2))]
    assert direction_holds(rows)
    rows[1] = VariantResult(AblationVariant.NO_I, 0.6, 0.0, 0.0, [0.6])
    assert not direction_holds(rows)
