"""Reusable experiment pipelines behind the CLI scenarios.

Each pipeline is a pure function of its seed (and knobs), so the runner
and the verification suite share one code path. Stream derivation keys
are fixed here; changing them changes every downstream number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import (
    ConsensusParams,
    MinerProfile,
    dpos_latency,
    por_latency,
    sample_miner_roster,
    vc_preset_params,
)
from .datasets import (
    BLOBS_PRESETS,
    blobs,
    gaussian_mixture,
    mixture_means,
    mixture_scale,
)
from .evaluation import (
    LabeledDataset,
    MixingConfig,
    empirical_jsd,
    evaluate,
    macro_f1,
    mixed_training_set,
    train_classifier,
)
from .federation import (
    ClientState,
    FederationConfig,
    generate_synthetic,
    local_update,
    partition_iid,
    run_training,
)
from .nets import TrainingHyperparams, init_mlp, toy_gan_architecture
from .privacy import DpConfig


@dataclass(frozen=True)
class AbResult:
    """One seed of the federated-vs-standalone comparison."""

    fed_jsd: float
    standalone_jsds: tuple[float, ...]

    @property
    def best_standalone(self) -> float:
        return min(self.standalone_jsds)

    @property
    def federated_wins(self) -> bool:
        return self.fed_jsd <= self.best_standalone


def fedgan_vs_standalone(
    seed: int,
    *,
    n_clients: int = 5,
    rounds: int = 50,
    local_epochs: int = 6,
    learning_rate: float = 0.1,
    hidden: int = 16,
    dataset_size: int = 500,
    mixture_preset: str = "mixture2d-ring",
    eval_samples: int = 4000,
    bins: int = 8,
    history_out: list | None = None,
) -> AbResult:
    """Train one federation and per-shard standalones on the same split.

    Standalone runs get the same total local-epoch budget
    (rounds x local_epochs) on their own shard; all runs share the
    initial networks. Quality is the histogram divergence between the
    full real dataset and fresh generator output.
    """
    root = np.random.default_rng(seed)
    means = mixture_means(mixture_preset)
    scale = mixture_scale(mixture_preset)
    data = gaussian_mixture(root, dataset_size, means, scale)
    shards = partition_iid(data, n_clients, root)

    init_rng = np.random.default_rng(seed + 10_000)
    disc0, gen0 = toy_gan_architecture(
        data.shape[1], 2, init_rng, hidden=hidden
    )
    hp = TrainingHyperparams(
        local_epochs=local_epochs,
        minibatch_size=32,
        learning_rate=learning_rate,
        noise_dim=2,
    )
    clients = [
        ClientState(f"c{i}", shards[i], disc0, gen0, np.random.default_rng([seed, i]))
        for i in range(n_clients)
    ]
    history = run_training(FederationConfig(n_clients, rounds, hp), clients)
    if history_out is not None:
        history_out.extend(history)
    eval_rng = np.random.default_rng(seed + 20_000)
    fed_jsd = empirical_jsd(
        data,
        generate_synthetic(history[-1].global_gen, eval_rng, eval_samples),
        bins=bins,
    )

    solo_hp = TrainingHyperparams(
        local_epochs=rounds * local_epochs,
        minibatch_size=32,
        learning_rate=learning_rate,
        noise_dim=2,
    )
    solo_jsds = []
    for i in range(n_clients):
        rng_i = np.random.default_rng([seed, i])
        _, solo_gen, _ = local_update(shards[i], disc0, gen0, solo_hp, rng_i)
        eval_rng = np.random.default_rng(seed + 20_000)
        solo_jsds.append(
            empirical_jsd(
                data,
                generate_synthetic(solo_gen, eval_rng, eval_samples),
                bins=bins,
            )
        )
    return AbResult(fed_jsd, tuple(solo_jsds))


def train_class_generators(
    train_x: np.ndarray,
    train_y: np.ndarray,
    seed: int,
    *,
    num_classes: int = 3,
    epochs: int = 150,
    learning_rate: float = 0.05,
    hidden: int = 16,
) -> dict:
    """Standalone per-class generators on a labeled training set."""
    gens = {}
    for label in range(num_classes):
        rows = train_x[train_y == label]
        rng = np.random.default_rng([seed, 77, label])
        disc, gen = toy_gan_architecture(
            train_x.shape[1], 2, rng, hidden=hidden
        )
        hp = TrainingHyperparams(
            local_epochs=epochs,
            minibatch_size=32,
            learning_rate=learning_rate,
            noise_dim=2,
        )
        _, trained_gen, _ = local_update(rows, disc, gen, hp, rng)
        gens[label] = trained_gen
    return gens


def mixing_trend(
    seed: int,
    *,
    preset: str = "blobs3-imbalanced",
    ratios: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0),
    classifier_epochs: int = 120,
    classifier_rate: float = 0.05,
) -> dict[float, float]:
    """Accuracy per mixing ratio for one seed of the imbalanced task."""
    spec = BLOBS_PRESETS[preset]
    rng = np.random.default_rng(seed)
    train_x, train_y = blobs(rng, spec, spec.train_counts)
    test_x, test_y = blobs(rng, spec, spec.test_counts)
    real = LabeledDataset(train_x, train_y, spec.num_classes)
    test = LabeledDataset(test_x, test_y, spec.num_classes)
    generators = train_class_generators(
        train_x, train_y, seed, num_classes=spec.num_classes
    )
    out = {}
    for ratio in ratios:
        cell = np.random.default_rng([seed, int(ratio * 10)])
        mixed = mixed_training_set(real, generators, MixingConfig(ratio), cell)
        net = train_classifier(mixed, classifier_epochs, classifier_rate, cell)
        out[ratio] = evaluate(net, test).accuracy
    return out


def train_dp_class_generators(
    train_x: np.ndarray,
    train_y: np.ndarray,
    seed: int,
    dp: DpConfig,
    *,
    num_classes: int = 3,
    n_clients: int = 2,
    rounds: int = 25,
    local_epochs: int = 4,
    learning_rate: float = 0.05,
    hidden: int = 16,
) -> dict:
    """Per-class generators trained by a small private federation.

    Stream keys depend on (seed, class, client) but not on the privacy
    budget, so sweeping epsilon reuses the same underlying noise draws
    at different scales (common random numbers).
    """
    gens = {}
    for label in range(num_classes):
        rows = train_x[train_y == label]
        init_rng = np.random.default_rng([seed, 500 + label])
        disc0, gen0 = toy_gan_architecture(train_x.shape[1], 2, init_rng, hidden=hidden)
        shards = partition_iid(rows, n_clients, np.random.default_rng([seed, 600 + label]))
        hp = TrainingHyperparams(
            local_epochs=local_epochs,
            minibatch_size=32,
            learning_rate=learning_rate,
            noise_dim=2,
        )
        clients = [
            ClientState(
                f"c{i}", shards[i], disc0, gen0,
                np.random.default_rng([seed, label, i]), dp,
            )
            for i in range(n_clients)
        ]
        history = run_training(FederationConfig(n_clients, rounds, hp), clients)
        gens[label] = history[-1].global_gen
    return gens


def epsilon_utility(
    seed: int,
    epsilon: float,
    *,
    preset: str = "blobs3-imbalanced",
    clip_norm: float = 0.1,
    delta: float = 1e-5,
    ratio: float = 3.0,
    classifier_epochs: int = 120,
    classifier_rate: float = 0.05,
) -> float:
    """Downstream macro-F1 for one (seed, epsilon) cell of the privacy sweep.

    Synthetic samples are box-clipped to the real training range before
    mixing (the toy analog of clamping generated images to the pixel
    range), and the classifier is the plain softmax head so far-out
    garbage degrades it smoothly rather than exploding it.
    """
    spec = BLOBS_PRESETS[preset]
    rng = np.random.default_rng(seed)
    train_x, train_y = blobs(rng, spec, spec.train_counts)
    test_x, test_y = blobs(rng, spec, spec.test_counts)
    real = LabeledDataset(train_x, train_y, spec.num_classes)
    test = LabeledDataset(test_x, test_y, spec.num_classes)

    dp = DpConfig(epsilon=epsilon, delta=delta, clip_norm=clip_norm)
    generators = train_dp_class_generators(
        train_x, train_y, seed, dp, num_classes=spec.num_classes
    )
    cell = np.random.default_rng([seed, 999])
    lo, hi = train_x.min(axis=0), train_x.max(axis=0)
    per_class = int(round(ratio * len(real) / spec.num_classes))
    xs, ys = [real.samples], [real.labels]
    for label in range(spec.num_classes):
        synth = np.clip(generate_synthetic(generators[label], cell, per_class), lo, hi)
        xs.append(synth)
        ys.append(np.full(per_class, label, dtype=int))
    mixed = LabeledDataset(np.vstack(xs), np.concatenate(ys), spec.num_classes)
    head = init_mlp(
        [train_x.shape[1], spec.num_classes],
        np.random.default_rng([seed, 1000]),
        output_activation="softmax",
    )
    net = train_classifier(
        mixed, classifier_epochs, classifier_rate, cell, initial=head
    )
    return macro_f1(evaluate(net, test))


EPSILON_GRID = (0.01, 0.05, 0.1, 0.3, 0.5)


def epsilon_sweep(
    seeds: list[int], epsilons: tuple[float, ...] = EPSILON_GRID, **kwargs
) -> dict[float, list[float]]:
    """Utility per epsilon across seeds; medians give the budget curve."""
    return {
        eps: [epsilon_utility(seed, eps, **kwargs) for seed in seeds]
        for eps in epsilons
    }


@dataclass(frozen=True)
class LatencyRow:
    block_kilobytes: float
    miners: int
    por_s: float
    dpos_s: float


def consensus_latency_bench(
    seed: int,
    *,
    block_kilobytes: tuple[float, ...] = (50, 100, 150, 200, 250, 300, 350, 400, 450, 500),
    miners: int = 10,
) -> list[LatencyRow]:
    """Analytic round latencies over a block-size grid on one roster.

    The roster is drawn once from the edge-resource ranges; each grid
    point resizes the fair-share latency model and reports the slowest
    committee member under both schemes.
    """
    roster = sample_miner_roster(miners, np.random.default_rng(seed))
    rows = []
    for kb in block_kilobytes:
        params = vc_preset_params(kb, committee_size=miners)
        por = max(por_latency(m, params) for m in roster)
        dpos = max(dpos_latency(m, params, miners) for m in roster)
        rows.append(LatencyRow(float(kb), miners, por, dpos))
    return rows


def consensus_miner_sweep(
    seed: int,
    *,
    block_kilobytes: float = 500.0,
    miner_counts: tuple[int, ...] = (2, 5, 10, 20, 50, 100),
) -> list[LatencyRow]:
    """Latencies against committee size at a fixed block size."""
    rows = []
    for n in miner_counts:
        roster = sample_miner_roster(n, np.random.default_rng(seed))
        params = vc_preset_params(block_kilobytes, committee_size=n)
        por = max(por_latency(m, params) for m in roster)
        dpos = max(dpos_latency(m, params, n) for m in roster)
        rows.append(LatencyRow(block_kilobytes, n, por, dpos))
    return rows
