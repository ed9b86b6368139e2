"""Scenario implementations: each writes its artifacts into one directory.

Artifacts are deterministic functions of (config, seed): delimited
tables and JSON manifests, each with a rendered figure alongside where
the table has a natural curve. Nothing is written outside the scenario's
output directory.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__, report
from .chain import (
    export_chain_jsonl,
    reputation_score,
    sample_miner_roster,
    vc_preset_params,
)
from .config import ExperimentConfig
from .datasets import (
    BLOBS_PRESETS,
    MIXTURE_PRESETS,
    blobs,
    gaussian_mixture,
    mixture_means,
    mixture_scale,
)
from .divergence import (
    LN4,
    DiscreteDistribution,
    DiscriminatorVector,
    jsd,
    optimal_discriminator,
    standalone_optimum,
    value_function,
    federated_optimum,
)
from .evaluation import (
    LabeledDataset,
    MixingConfig,
    empirical_jsd,
    export_confusion_csv,
    export_sweep_csv,
    mixing_sweep,
)
from .experiments import (
    EPSILON_GRID,
    consensus_latency_bench,
    consensus_miner_sweep,
    epsilon_sweep,
    fedgan_vs_standalone,
    mixing_trend,
    train_class_generators,
)
from .federation import (
    BlockchainAggregator,
    ClientState,
    FederationConfig,
    client_key,
    export_history_csv,
    generate_synthetic,
    partition_iid,
    run_manifest,
    run_training,
    write_manifest,
)
from .nets import toy_gan_architecture


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _manifest(config: ExperimentConfig, extra: dict | None = None) -> dict:
    fed_cfg = FederationConfig(
        config.num_clients, config.global_rounds, config.hyperparams,
        config.aggregator,
    )
    manifest = run_manifest(
        fed_cfg, config.seed, preset=config.dataset_preset, dp=config.dp,
        extra={"scenario": config.scenario, "version": __version__},
    )
    if extra:
        manifest.update(extra)
    return manifest


def _mixture_data(config: ExperimentConfig, rng) -> np.ndarray:
    preset = config.dataset_preset or "mixture2d-ring"
    if preset not in MIXTURE_PRESETS:
        raise ValueError(f"scenario needs a mixture preset, got {preset!r}")
    return gaussian_mixture(
        rng, config.dataset_size, mixture_means(preset), mixture_scale(preset)
    )


def _training_run(config: ExperimentConfig, out: Path) -> None:
    """Shared body of the standalone / central / blockchain scenarios."""
    n = 1 if config.scenario == "standalone" else config.num_clients
    root = np.random.default_rng(config.seed)
    data = _mixture_data(config, root)
    shards = partition_iid(data, n, root)
    init_rng = np.random.default_rng(config.seed + 10_000)
    disc0, gen0 = toy_gan_architecture(
        data.shape[1], config.hyperparams.noise_dim, init_rng,
        hidden=config.gan_hidden,
    )
    clients = [
        ClientState(
            f"c{i}", shards[i], disc0, gen0,
            np.random.default_rng([config.seed, i]), config.dp,
        )
        for i in range(n)
    ]
    aggregator = "blockchain" if config.scenario == "fedgan-blockchain" else "central-cloud"
    fed_cfg = FederationConfig(n, config.global_rounds, config.hyperparams, aggregator)

    blockchain = None
    if aggregator == "blockchain":
        params = config.consensus or vc_preset_params()
        blockchain = BlockchainAggregator(
            miners=sample_miner_roster(
                params.committee_size, np.random.default_rng(config.seed + 30_000)
            ),
            params=params,
            rng=np.random.default_rng(config.seed + 40_000),
            keys={c.client_id: client_key(c.client_id) for c in clients},
        )

    history = run_training(fed_cfg, clients, blockchain=blockchain)
    export_history_csv(history, out / "history.csv")

    # divergence trace: generator quality against the full dataset
    jsd_rows = []
    for record in history:
        eval_rng = np.random.default_rng(config.seed + 20_000)
        score = empirical_jsd(
            data, generate_synthetic(record.global_gen, eval_rng, 2000), bins=8
        )
        jsd_rows.append([record.round_index, score])
    _write_csv(out / "jsd_trace.csv", ["round", "empirical_jsd"], jsd_rows)

    eval_rng = np.random.default_rng(config.seed + 20_000)
    final_samples = generate_synthetic(history[-1].global_gen, eval_rng, 2000)

    extra = {"final_empirical_jsd": jsd_rows[-1][1]}
    if blockchain is not None:
        export_chain_jsonl(blockchain.ledger, out / "chain.jsonl")
        extra["block_heights"] = [r.block_height for r in history]
    write_manifest(_manifest(
        ExperimentConfig(**{**config.__dict__, "num_clients": n}), extra
    ), out / "manifest.json")

    if config.figures:
        report.loss_curves(history, out / "loss_curves.png")
        report.sample_overlay(data, final_samples, out / "samples.png")


def run_standalone(config: ExperimentConfig, out: Path) -> bool:
    _training_run(config, out)
    return True


def run_fedgan_central(config: ExperimentConfig, out: Path) -> bool:
    _training_run(config, out)
    return True


def run_fedgan_blockchain(config: ExperimentConfig, out: Path) -> bool:
    _training_run(config, out)
    return True


def run_verify_theory(config: ExperimentConfig, out: Path) -> bool:
    """Closed-form identity checks; False when any margin is violated."""
    rng = np.random.default_rng(config.seed)
    rows: list[tuple[str, float, float]] = []

    worst = 0.0
    for _ in range(10_000):
        size = int(rng.integers(2, 9))
        p = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        q = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        direct = value_function(p, q, optimal_discriminator(p, q))
        worst = max(worst, abs(direct - standalone_optimum(p, q)))
    rows.append(("optimum_identity_random_pairs", worst, 1e-10))

    worst = 0.0
    for _ in range(100):
        size = int(rng.integers(1, 9))
        d = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        worst = max(worst, abs(standalone_optimum(d, d) + LN4))
    rows.append(("matched_pair_equals_minus_ln4", worst, 1e-12))

    worst = 0.0
    for n in range(1, 11):
        d = DiscreteDistribution.from_weights(rng.random(4) + 1e-9)
        worst = max(worst, abs(federated_optimum([(d, d)] * n) + n * LN4))
    rows.append(("federated_matched_equals_minus_n_ln4", worst, 1e-12))

    worst = 0.0
    for _ in range(2000):
        size = int(rng.integers(1, 9))
        p = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        q = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        v = jsd(p, q)
        worst = max(worst, abs(v - jsd(q, p)))
        if not -1e-15 <= v <= math.log(2.0) + 1e-12:
            worst = math.inf
    rows.append(("jsd_symmetric_and_bounded", worst, 1e-15))

    worst = 0.0
    for _ in range(100):
        size = int(rng.integers(2, 6))
        p = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        q = DiscreteDistribution.from_weights(rng.random(size) + 1e-9)
        best = value_function(p, q, optimal_discriminator(p, q))
        for _ in range(100):
            other = value_function(p, q, DiscriminatorVector(rng.random(size)))
            worst = max(worst, other - best)
    rows.append(("optimal_discriminator_maximizes", worst, 1e-9))

    rows.append(("reputation_zero_at_threshold",
                 abs(reputation_score(2.5, 2.5)), 1e-15))

    table = [[name, err, tol, err <= tol] for name, err, tol in rows]
    _write_csv(out / "theory_report.csv",
               ["check", "max_error", "tolerance", "passed"], table)
    write_manifest(_manifest(config), out / "manifest.json")
    if config.figures:
        report.theory_margins(rows, out / "theory_report.png")
    return all(err <= tol for _, err, tol in rows)


def run_bench_consensus(config: ExperimentConfig, out: Path) -> bool:
    rows = consensus_latency_bench(config.seed)
    _write_csv(
        out / "latency_bench.csv",
        ["block_kb", "miners", "por_s", "dpos_s"],
        [[r.block_kilobytes, r.miners, r.por_s, r.dpos_s] for r in rows],
    )
    miner_rows = consensus_miner_sweep(config.seed)
    _write_csv(
        out / "miners_sweep.csv",
        ["block_kb", "miners", "por_s", "dpos_s"],
        [[r.block_kilobytes, r.miners, r.por_s, r.dpos_s] for r in miner_rows],
    )
    write_manifest(_manifest(config), out / "manifest.json")
    if config.figures:
        report.latency_curves(rows, out / "latency_bench.png")
    return True


def run_sweep_mixing(config: ExperimentConfig, out: Path) -> bool:
    preset = config.dataset_preset or "blobs3-imbalanced"
    spec = BLOBS_PRESETS[preset]
    ratios = (0.0, 1.0, 2.0, 3.0)

    # one-seed detailed table with per-class metrics
    rng = np.random.default_rng(config.seed)
    train_x, train_y = blobs(rng, spec, spec.train_counts)
    test_x, test_y = blobs(rng, spec, spec.test_counts)
    generators = train_class_generators(
        train_x, train_y, config.seed, num_classes=spec.num_classes
    )
    detail = mixing_sweep(
        LabeledDataset(train_x, train_y, spec.num_classes),
        LabeledDataset(test_x, test_y, spec.num_classes),
        generators,
        [MixingConfig(r) for r in ratios],
        np.random.default_rng([config.seed, 31]),
    )
    export_sweep_csv(detail, out / "mixing_sweep.csv")
    for row in detail:
        export_confusion_csv(row.confusion, out / f"confusion_ratio{row.ratio:g}.csv")

    # ten-seed trend with medians
    seeds = list(range(config.seed, config.seed + 10))
    per_seed = {s: mixing_trend(s, preset=preset, ratios=ratios) for s in seeds}
    rows = [[s, r, per_seed[s][r]] for s in seeds for r in ratios]
    _write_csv(out / "mixing_trend.csv", ["seed", "ratio", "accuracy"], rows)
    medians = {
        r: float(np.median([per_seed[s][r] for s in seeds])) for r in ratios
    }
    _write_csv(out / "mixing_medians.csv", ["ratio", "median_accuracy"],
               [[r, medians[r]] for r in ratios])
    write_manifest(_manifest(config, {"ratios": list(ratios)}), out / "manifest.json")
    if config.figures:
        report.ratio_curve(medians, out / "mixing_medians.png")
    return True


def run_sweep_epsilon(config: ExperimentConfig, out: Path) -> bool:
    seeds = list(range(config.seed, config.seed + 10))
    values = epsilon_sweep(seeds)
    rows = [
        [eps, seed, value]
        for eps in EPSILON_GRID
        for seed, value in zip(seeds, values[eps])
    ]
    _write_csv(out / "epsilon_sweep.csv", ["epsilon", "seed", "macro_f1"], rows)
    medians = {eps: float(np.median(values[eps])) for eps in EPSILON_GRID}
    _write_csv(out / "epsilon_medians.csv", ["epsilon", "median_macro_f1"],
               [[eps, medians[eps]] for eps in EPSILON_GRID])
    write_manifest(
        _manifest(config, {"epsilon_grid": list(EPSILON_GRID)}),
        out / "manifest.json",
    )
    if config.figures:
        report.epsilon_curve(medians, out / "epsilon_medians.png")
    return True


SCENARIO_RUNNERS = {
    "standalone": run_standalone,
    "fedgan-central": run_fedgan_central,
    "fedgan-blockchain": run_fedgan_blockchain,
    "verify-theory": run_verify_theory,
    "bench-consensus": run_bench_consensus,
    "sweep-mixing": run_sweep_mixing,
    "sweep-epsilon": run_sweep_epsilon,
}


def run_scenario(config: ExperimentConfig, out_dir) -> bool:
    """Dispatch to the scenario runner; True means all checks passed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = SCENARIO_RUNNERS[config.scenario]
    return runner(config, out)
