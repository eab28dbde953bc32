"""Ablation harness: run the four global-context variants side by side.

The variants must differ only through the documented switches (interval
weighting, occurrence counts, interval threshold); ``compare_variant_matrices``
checks exactly that on the built adjacencies, and ``run_ablation`` trains and
evaluates each variant over several seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import HyperParams
from .global_context import AblationVariant, extract_hop_pairs
from .ingest import DatasetBundle
from .serve_eval import evaluate
from .train import build_adjacency_from_bundle, train_loop
from .model import load_checkpoint

VARIANT_ORDER = (AblationVariant.FULL, AblationVariant.NO_I,
                 AblationVariant.NO_IN, AblationVariant.NO_INT)


@dataclass
class VariantResult:
    variant: AblationVariant
    recall: float
    ndcg: float
    hit_rate: float
    per_seed_recall: list[float]


def compare_variant_matrices(bundle: DatasetBundle, hp: HyperParams) -> dict:
    """Facts tying each variant's accumulator to its documented switch.

    Returns a report dict; every boolean in it must be True for the variants
    to be considered wired correctly.
    """
    accs = {
        v: extract_hop_pairs(bundle.train_sequences(), v, hp.a, hp.b,
                             float(hp.l_time), hp.time_unit_seconds,
                             hp.allow_self_pairs)
        for v in VARIANT_ORDER
    }
    report: dict[str, bool] = {}
    for k in (1, 2, 3):
        full = accs[AblationVariant.FULL].weights[k]
        no_i = accs[AblationVariant.NO_I].weights[k]
        no_in = accs[AblationVariant.NO_IN].weights[k]
        no_int = accs[AblationVariant.NO_INT].weights[k]
        same_support = set(full) == set(no_i) == set(no_in)
        report[f"hop{k}_same_support_under_threshold"] = same_support
        report[f"hop{k}_no_threshold_superset"] = set(no_in) <= set(no_int)
        report[f"hop{k}_counts_are_integers"] = all(
            float(v).is_integer() and v >= 1.0 for v in no_i.values())
        report[f"hop{k}_presence_is_binary"] = (
            all(v == 1.0 for v in no_in.values())
            and all(v == 1.0 for v in no_int.values()))
        report[f"hop{k}_interval_weight_bounded_by_count"] = all(
            full[key] <= no_i[key] + 1e-9 for key in full)
    return report


def run_ablation(bundle: DatasetBundle, hp: HyperParams, seeds: list[int],
                 out_dir, n_eval: int = 20, log_fn=None) -> list[VariantResult]:
    """Train/evaluate every variant for each seed; metrics on test users."""
    from pathlib import Path
    out = Path(out_dir)
    results = []
    for variant in VARIANT_ORDER:
        per_seed = []
        ndcgs = []
        hits = []
        for seed in seeds:
            hp_v = replace(hp, variant=variant, seed=seed).validate()
            adj = build_adjacency_from_bundle(bundle, hp_v)
            run_dir = out / f"{variant.value}_seed{seed}"
            result = train_loop(hp_v, bundle, adj.a_norm, run_dir, n_eval=n_eval)
            params = load_checkpoint(result.checkpoint_path)
            report = evaluate(bundle.sequences, bundle.split.test_users, params,
                              adj.a_norm.astype(params.dtype), n_list=(n_eval,),
                              time_unit_seconds=hp_v.time_unit_seconds,
                              residual=hp_v.residual, threads=hp_v.threads)
            row = report.per_n[n_eval]
            per_seed.append(row.recall)
            ndcgs.append(row.ndcg)
            hits.append(row.hit_rate)
            if log_fn is not None:
                log_fn(f"{variant.value} seed={seed} recall@{n_eval}={row.recall:.4f}")
        results.append(VariantResult(
            variant=variant,
            recall=float(np.mean(per_seed)),
            ndcg=float(np.mean(ndcgs)),
            hit_rate=float(np.mean(hits)),
            per_seed_recall=per_seed,
        ))
    return results


def direction_holds(results: list[VariantResult]) -> bool:
    """True when the full variant's mean recall tops every ablation."""
    full = next(r for r in results if r.variant is AblationVariant.FULL)
    return all(full.recall >= r.recall for r in results
               if r.variant is not AblationVariant.FULL)
