"""Round-based federated training: shard, fan out, average, broadcast.

Every global round broadcasts the current global discriminator and
generator to all clients, runs the local alternating-update procedure on
each client's shard, and averages the returned parameters elementwise
(unweighted). With the blockchain aggregator the same averaging happens
after the serialized updates round-trip through a verified block, so an
honest chain reproduces the plain average bit for bit; the block height
is recorded per round.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import chain as chain_mod
from .nets import (
    NetworkParameters,
    RngStream,
    TrainingHyperparams,
    apply_update,
    congruent,
    discriminator_grads,
    forward,
    generator_grads,
    params_from_bytes,
    params_to_bytes,
    sample_noise,
    scale_grads,
)
from .privacy import DpConfig, dp_step


class FederationError(ValueError):
    """Configuration or state error in the training orchestration."""


class FailedRoundError(RuntimeError):
    """Consensus rejected a round's block; carries the round index."""

    def __init__(self, round_index: int, votes: dict[str, bool]):
        tally = f"{sum(votes.values())}/{len(votes)} positive"
        super().__init__(f"round {round_index} rejected by consensus ({tally})")
        self.round_index = round_index
        self.votes = votes


@dataclass
class ClientState:
    """One institution: shard, local nets, RNG stream, optional privacy."""

    client_id: str
    shard: np.ndarray
    disc: NetworkParameters
    gen: NetworkParameters
    rng: RngStream
    dp: DpConfig | None = None


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int
    global_rounds: int
    hyperparams: TrainingHyperparams
    aggregator: str = "central-cloud"

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise FederationError("num_clients must be >= 1")
        if self.global_rounds < 1:
            raise FederationError("global_rounds must be >= 1")
        if self.aggregator not in ("central-cloud", "blockchain"):
            raise FederationError(f"unknown aggregator {self.aggregator!r}")


@dataclass
class RoundRecord:
    round_index: int
    global_disc: NetworkParameters
    global_gen: NetworkParameters
    client_losses: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    block_height: int | None = None


def partition_iid(dataset: np.ndarray, n: int, rng: RngStream) -> list[np.ndarray]:
    """Random permutation split into n shards with sizes within one."""
    data = np.asarray(dataset)
    if n < 1:
        raise FederationError("n must be >= 1")
    if data.shape[0] < n:
        raise FederationError(f"dataset of {data.shape[0]} cannot feed {n} shards")
    order = rng.permutation(data.shape[0])
    return [data[idx] for idx in np.array_split(order, n)]


def aggregate(params: list[NetworkParameters]) -> NetworkParameters:
    """Elementwise arithmetic mean of shape-congruent parameter sets."""
    if not params:
        raise FederationError("nothing to aggregate")
    first = params[0]
    for other in params[1:]:
        if not congruent(first, other):
            raise FederationError("parameter sets are not shape-congruent")
    layers = []
    for i, layer in enumerate(first.layers):
        w = np.mean(np.stack([p.layers[i].weights for p in params]), axis=0)
        b = np.mean(np.stack([p.layers[i].bias for p in params]), axis=0)
        layers.append(
            layer.__class__(w, b, layer.activation, layer.slope)
        )
    return NetworkParameters(layers)


def local_update(
    shard: np.ndarray,
    global_disc: NetworkParameters,
    global_gen: NetworkParameters,
    hp: TrainingHyperparams,
    rng: RngStream,
    dp: DpConfig | None = None,
) -> tuple[NetworkParameters, NetworkParameters, dict[str, list[float]]]:
    """L epochs of alternating steps starting from the broadcast globals.

    Each minibatch takes one discriminator ascent step then one generator
    descent step on the same noise draw. Per-epoch mean objectives are
    returned as the loss trace. With a privacy config, both updates go
    through the clipped-and-noised step instead of plain SGD.
    """
    data = np.asarray(shard, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise FederationError("shard must be a non-empty sample matrix")
    if data.shape[1] != global_disc.in_dim:
        raise FederationError("shard dim does not match discriminator input")
    disc, gen = global_disc, global_gen
    trace: dict[str, list[float]] = {"disc": [], "gen": []}
    for _ in range(hp.local_epochs):
        order = rng.permutation(data.shape[0])
        epoch_disc, epoch_gen = [], []
        for start in range(0, data.shape[0], hp.minibatch_size):
            real = data[order[start : start + hp.minibatch_size]]
            noise = sample_noise(rng, real.shape[0], hp.noise_dim)

            d_grads, d_obj = discriminator_grads(
                disc, gen, real, noise,
                dropout=hp.dropout, rng=rng if hp.dropout > 0 else None,
            )
            if dp is None:
                disc = apply_update(disc, d_grads, +hp.learning_rate)
            else:
                # ascent on the objective = descent on its negation
                disc = dp_step(disc, scale_grads(d_grads, -1.0), hp.learning_rate, dp, rng)

            g_grads, g_obj = generator_grads(
                disc, gen, noise, non_saturating=hp.non_saturating
            )
            if dp is None:
                gen = apply_update(gen, g_grads, -hp.learning_rate)
            else:
                gen = dp_step(gen, g_grads, hp.learning_rate, dp, rng)

            epoch_disc.append(d_obj)
            epoch_gen.append(g_obj)
        trace["disc"].append(float(np.mean(epoch_disc)))
        trace["gen"].append(float(np.mean(epoch_gen)))
    return disc, gen, trace


def _encode_update(disc: NetworkParameters, gen: NetworkParameters) -> bytes:
    disc_bytes = params_to_bytes(disc)
    return len(disc_bytes).to_bytes(8, "little") + disc_bytes + params_to_bytes(gen)


def _decode_update(payload: bytes) -> tuple[NetworkParameters, NetworkParameters]:
    n = int.from_bytes(payload[:8], "little")
    return params_from_bytes(payload[8 : 8 + n]), params_from_bytes(payload[8 + n :])


@dataclass
class BlockchainAggregator:
    """Chain-side state for blockchain-mode training."""

    miners: list[chain_mod.MinerProfile]
    params: chain_mod.ConsensusParams
    rng: RngStream
    keys: dict[str, bytes]
    honesty: dict[str, str] = field(default_factory=dict)
    ledger: chain_mod.Ledger = field(default_factory=chain_mod.Ledger)


def client_key(client_id: str) -> bytes:
    """Deterministic simulated wallet key for a client."""
    return f"wallet:{client_id}".encode()


def run_training(
    config: FederationConfig,
    clients: list[ClientState],
    *,
    blockchain: BlockchainAggregator | None = None,
) -> list[RoundRecord]:
    """Run T global rounds of the federation, returning the round history.

    Blockchain mode routes every round's updates through a consensus
    round; a rejected block aborts training with FailedRoundError.
    """
    if len(clients) != config.num_clients:
        raise FederationError(
            f"expected {config.num_clients} clients, got {len(clients)}"
        )
    ids = [c.client_id for c in clients]
    if len(set(ids)) != len(ids):
        raise FederationError("client ids must be unique")
    for c in clients:
        if not congruent(c.disc, clients[0].disc) or not congruent(c.gen, clients[0].gen):
            raise FederationError("client network shapes are not congruent")
        if np.asarray(c.shard).shape[0] < 1:
            raise FederationError(f"client {c.client_id} has an empty shard")
    if config.aggregator == "blockchain" and blockchain is None:
        raise FederationError("blockchain aggregator state is required")

    global_disc = aggregate([c.disc for c in clients])
    global_gen = aggregate([c.gen for c in clients])

    history: list[RoundRecord] = []
    for t in range(1, config.global_rounds + 1):
        updates: list[tuple[NetworkParameters, NetworkParameters]] = []
        losses: dict[str, dict[str, list[float]]] = {}
        for c in clients:
            disc_n, gen_n, trace = local_update(
                c.shard, global_disc, global_gen, config.hyperparams, c.rng, c.dp
            )
            c.disc, c.gen = disc_n, gen_n
            updates.append((disc_n, gen_n))
            losses[c.client_id] = trace

        block_height = None
        if config.aggregator == "blockchain":
            updates, block_height = _aggregate_via_chain(
                blockchain, clients, updates, t
            )
        global_disc = aggregate([d for d, _ in updates])
        global_gen = aggregate([g for _, g in updates])
        history.append(
            RoundRecord(t, global_disc, global_gen, losses, block_height)
        )
    return history


def _aggregate_via_chain(
    bc: BlockchainAggregator,
    clients: list[ClientState],
    updates: list[tuple[NetworkParameters, NetworkParameters]],
    round_index: int,
) -> tuple[list[tuple[NetworkParameters, NetworkParameters]], int]:
    """Ship updates through one consensus round; return what the block
    carries so averaging happens on the downloaded copies."""
    pending = [
        chain_mod.make_transaction(
            c.client_id, _encode_update(d, g), round_index, bc.keys[c.client_id]
        )
        for c, (d, g) in zip(clients, updates)
    ]
    params = bc.params
    if params.partition_count > len(pending):
        params = dataclasses.replace(params, partition_count=len(pending))
    outcome = chain_mod.run_consensus_round(
        pending,
        bc.miners,
        params,
        bc.rng,
        bc.ledger,
        keys=bc.keys,
        honesty=bc.honesty,
        slot=round_index - 1,
    )
    if not outcome.approved:
        raise FailedRoundError(round_index, outcome.votes)
    downloaded = [_decode_update(tx.payload) for tx in outcome.block.transactions]
    return downloaded, outcome.block.height


def generate_synthetic(
    gen: NetworkParameters, rng: RngStream, count: int, noise_dim: int | None = None
) -> np.ndarray:
    """Push `count` noise draws through a trained generator."""
    if count < 0:
        raise ValueError("count must be >= 0")
    dim = gen.in_dim if noise_dim is None else noise_dim
    if count == 0:
        return np.empty((0, gen.out_dim))
    return forward(gen, sample_noise(rng, count, dim))


def generate_synthetic_per_class(
    generators: dict[int, NetworkParameters],
    counts: dict[int, int],
    rng: RngStream,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class generation: returns stacked samples and their labels."""
    samples, labels = [], []
    for label in sorted(counts):
        block = generate_synthetic(generators[label], rng, counts[label])
        samples.append(block)
        labels.append(np.full(counts[label], label, dtype=int))
    if not samples:
        return np.empty((0, 0)), np.empty(0, dtype=int)
    return np.vstack(samples), np.concatenate(labels)


def export_history_csv(history: list[RoundRecord], path) -> None:
    """Flat per-round, per-client loss table."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "client_id", "disc_loss", "gen_loss"])
        for record in history:
            for client_id in sorted(record.client_losses):
                trace = record.client_losses[client_id]
                disc = trace["disc"][-1] if trace["disc"] else ""
                gen = trace["gen"][-1] if trace["gen"] else ""
                writer.writerow([record.round_index, client_id, disc, gen])


def run_manifest(
    config: FederationConfig,
    seed: int,
    *,
    preset: str | None = None,
    dp: DpConfig | None = None,
    extra: dict | None = None,
) -> dict:
    """JSON-ready run description: config, seed, presets, privacy tally."""
    manifest: dict = {
        "seed": seed,
        "num_clients": config.num_clients,
        "global_rounds": config.global_rounds,
        "aggregator": config.aggregator,
        "hyperparams": {
            "local_epochs": config.hyperparams.local_epochs,
            "minibatch_size": config.hyperparams.minibatch_size,
            "learning_rate": config.hyperparams.learning_rate,
            "noise_dim": config.hyperparams.noise_dim,
            "non_saturating": config.hyperparams.non_saturating,
            "dropout": config.hyperparams.dropout,
        },
        "dataset_preset": preset,
    }
    if dp is not None:
        manifest["dp"] = {
            "epsilon_per_step": dp.epsilon,
            "delta": dp.delta,
            "clip_norm": dp.clip_norm,
            "explicit_noise_std": dp.explicit_noise_std,
            "composition": "naive: total epsilon = steps x per-step epsilon",
        }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
