"""Sharding, averaging, round orchestration, and the chain-backed path."""

import math

import numpy as np
import pytest

from fedgan_lab import chain as chain_mod
from fedgan_lab.datasets import gaussian_mixture, two_mode_line
from fedgan_lab.federation import (
    BlockchainAggregator,
    ClientState,
    FailedRoundError,
    FederationConfig,
    FederationError,
    RoundRecord,
    aggregate,
    client_key,
    export_history_csv,
    generate_synthetic,
    generate_synthetic_per_class,
    local_update,
    partition_iid,
    run_manifest,
    run_training,
)
from fedgan_lab.nets import (
    Layer,
    NetworkParameters,
    TrainingHyperparams,
    init_mlp,
    toy_gan_architecture,
)
from fedgan_lab.privacy import DpConfig

LN4 = math.log(4.0)


def one_layer(w, b):
    return NetworkParameters([Layer(np.array(w, dtype=float), np.array(b, dtype=float), "identity")])


def nets_equal(a, b):
    return all(
        np.array_equal(x.weights, y.weights) and np.array_equal(x.bias, y.bias)
        for x, y in zip(a.layers, b.layers)
    )


class TestPartitionIid:
    def test_even_split(self):
        rng = np.random.default_rng(0)
        shards = partition_iid(np.arange(100).reshape(100, 1), 5, rng)
        assert [len(s) for s in shards] == [20] * 5

    def test_remainder_spread(self):
        rng = np.random.default_rng(1)
        shards = partition_iid(np.arange(7).reshape(7, 1), 3, rng)
        assert sorted((len(s) for s in shards), reverse=True) == [3, 2, 2]

    def test_determinism(self):
        data = np.arange(40).reshape(20, 2)
        a = partition_iid(data, 4, np.random.default_rng(9))
        b = partition_iid(data, 4, np.random.default_rng(9))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_union_and_disjointness(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((53, 2))
        shards = partition_iid(data, 7, np.random.default_rng(3))
        stacked = np.vstack(shards)
        assert stacked.shape == data.shape
        # every original row appears exactly once
        original = {tuple(row) for row in data}
        recovered = [tuple(row) for row in stacked]
        assert len(recovered) == len(set(recovered))
        assert set(recovered) == original

    def test_errors(self):
        rng = np.random.default_rng(4)
        with pytest.raises(FederationError):
            partition_iid(np.ones((3, 1)), 0, rng)
        with pytest.raises(FederationError):
            partition_iid(np.ones((3, 1)), 4, rng)


class TestAggregate:
    def test_idempotent_on_identical_sets(self):
        net = one_layer([[1.0, 2.0]], [0.5])
        out = aggregate([net, net, net])
        assert nets_equal(out, net)

    def test_opposites_cancel(self):
        a = one_layer([[1.0, -2.0]], [3.0])
        b = one_layer([[-1.0, 2.0]], [-3.0])
        out = aggregate([a, b])
        assert np.array_equal(out.layers[0].weights, [[0.0, 0.0]])
        assert np.array_equal(out.layers[0].bias, [0.0])

    def test_arithmetic_mean(self):
        nets = [one_layer([[1.0, 2.0]], [0.0]),
                one_layer([[3.0, 4.0]], [0.0]),
                one_layer([[5.0, 6.0]], [0.0])]
        out = aggregate(nets)
        assert np.array_equal(out.layers[0].weights, [[3.0, 4.0]])

    def test_scale_linearity(self):
        rng = np.random.default_rng(5)
        nets = [init_mlp([3, 4, 2], rng) for _ in range(4)]
        scaled = [
            NetworkParameters(
                [Layer(l.weights * 2.5, l.bias * 2.5, l.activation, l.slope) for l in n.layers]
            )
            for n in nets
        ]
        base = aggregate(nets)
        out = aggregate(scaled)
        for lb, lo in zip(base.layers, out.layers):
            assert np.allclose(lo.weights, 2.5 * lb.weights, rtol=1e-14)

    def test_rejects_incongruent(self):
        rng = np.random.default_rng(6)
        with pytest.raises(FederationError):
            aggregate([init_mlp([2, 2], rng), init_mlp([2, 3], rng)])

    def test_rejects_empty(self):
        with pytest.raises(FederationError):
            aggregate([])


class TestLocalUpdate:
    def _client_nets(self, seed=0):
        rng = np.random.default_rng(seed)
        return toy_gan_architecture(1, 2, rng, hidden=8)

    def test_zero_epochs_returns_globals(self):
        disc, gen = self._client_nets()
        shard = np.random.default_rng(1).standard_normal((10, 1))
        hp = TrainingHyperparams(local_epochs=0)
        d, g, trace = local_update(shard, disc, gen, hp, np.random.default_rng(2))
        assert nets_equal(d, disc) and nets_equal(g, gen)
        assert trace == {"disc": [], "gen": []}

    def test_bit_identical_given_same_seed(self):
        disc, gen = self._client_nets()
        shard = np.random.default_rng(3).standard_normal((20, 1))
        hp = TrainingHyperparams(local_epochs=3, minibatch_size=8, learning_rate=0.05)
        out1 = local_update(shard, disc, gen, hp, np.random.default_rng(42))
        out2 = local_update(shard, disc, gen, hp, np.random.default_rng(42))
        assert nets_equal(out1[0], out2[0]) and nets_equal(out1[1], out2[1])
        assert out1[2] == out2[2]

    def test_two_mode_shard_reaches_equilibrium_band(self):
        finals = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            shard = gaussian_mixture(rng, 120, two_mode_line(4.0), scale=0.3)
            disc, gen = toy_gan_architecture(1, 2, rng, hidden=16)
            hp = TrainingHyperparams(local_epochs=20, minibatch_size=32,
                                     learning_rate=0.05, noise_dim=2)
            _, _, trace = local_update(shard, disc, gen, hp, rng)
            finals.append(trace["disc"][-1])
        assert abs(np.median(finals) + LN4) <= 0.3

    def test_empty_shard_rejected(self):
        disc, gen = self._client_nets()
        hp = TrainingHyperparams(local_epochs=1)
        with pytest.raises(FederationError):
            local_update(np.empty((0, 1)), disc, gen, hp, np.random.default_rng(0))

    def test_shape_mismatch_rejected(self):
        disc, gen = self._client_nets()
        hp = TrainingHyperparams(local_epochs=1)
        with pytest.raises(FederationError):
            local_update(np.ones((5, 3)), disc, gen, hp, np.random.default_rng(0))

    def test_discrete_four_point_convergence_signal(self):
        # long standalone run on a 4-point target settles near the
        # theoretical equilibrium for most seeds
        from fedgan_lab.datasets import discrete_target, four_point_support

        in_band = 0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            shard = discrete_target(rng, 128, four_point_support())
            disc, gen = toy_gan_architecture(1, 2, rng, hidden=16)
            hp = TrainingHyperparams(local_epochs=150, minibatch_size=32,
                                     learning_rate=0.05, noise_dim=2)
            _, _, trace = local_update(shard, disc, gen, hp, rng)
            in_band += abs(trace["disc"][-1] + LN4) <= 0.3
        assert in_band >= 8


def make_clients(n, seed, shard_size=24, dp=None):
    init_rng = np.random.default_rng(seed)
    disc0, gen0 = toy_gan_architecture(1, 2, init_rng, hidden=4)
    data_rng = np.random.default_rng(seed + 1)
    clients = [
        ClientState(
            f"c{i}",
            data_rng.standard_normal((shard_size, 1)),
            disc0,
            gen0,
            np.random.default_rng([seed, i]),
            dp,
        )
        for i in range(n)
    ]
    return clients, disc0, gen0


class TestRunTraining:
    def test_noop_round_keeps_globals(self):
        clients, disc0, gen0 = make_clients(1, 0)
        cfg = FederationConfig(1, 1, TrainingHyperparams(local_epochs=0))
        history = run_training(cfg, clients)
        assert len(history) == 1
        assert nets_equal(history[0].global_disc, disc0)
        assert nets_equal(history[0].global_gen, gen0)

    def test_single_client_matches_standalone_trajectory(self):
        clients, disc0, gen0 = make_clients(1, 1)
        shard = clients[0].shard
        hp = TrainingHyperparams(local_epochs=2, minibatch_size=8, learning_rate=0.05)
        cfg = FederationConfig(1, 3, hp)
        history = run_training(cfg, clients)

        disc, gen = disc0, gen0
        rng = np.random.default_rng([1, 0])
        for _ in range(3):
            disc, gen, _ = local_update(shard, disc, gen, hp, rng)
        assert nets_equal(history[-1].global_disc, disc)
        assert nets_equal(history[-1].global_gen, gen)

    def test_history_bookkeeping(self):
        clients, _, _ = make_clients(3, 2)
        cfg = FederationConfig(3, 5, TrainingHyperparams(local_epochs=1, minibatch_size=8))
        history = run_training(cfg, clients)
        assert [r.round_index for r in history] == [1, 2, 3, 4, 5]
        for record in history:
            assert set(record.client_losses) == {"c0", "c1", "c2"}

    def test_client_count_mismatch(self):
        clients, _, _ = make_clients(2, 3)
        cfg = FederationConfig(3, 1, TrainingHyperparams())
        with pytest.raises(FederationError):
            run_training(cfg, clients)

    def test_duplicate_ids_rejected(self):
        clients, _, _ = make_clients(2, 4)
        clients[1].client_id = clients[0].client_id
        cfg = FederationConfig(2, 1, TrainingHyperparams())
        with pytest.raises(FederationError):
            run_training(cfg, clients)

    def test_dp_round_runs_and_differs_from_plain(self):
        dp = DpConfig(epsilon=0.5, clip_norm=1.0)
        noisy, disc0, gen0 = make_clients(2, 5, dp=dp)
        plain, _, _ = make_clients(2, 5)
        hp = TrainingHyperparams(local_epochs=1, minibatch_size=8, learning_rate=0.05)
        noisy_hist = run_training(FederationConfig(2, 1, hp), noisy)
        plain_hist = run_training(FederationConfig(2, 1, hp), plain)
        assert not nets_equal(noisy_hist[-1].global_gen, plain_hist[-1].global_gen)


def blockchain_state(clients, seed, committee=4):
    keys = {c.client_id: client_key(c.client_id) for c in clients}
    return BlockchainAggregator(
        miners=chain_mod.sample_miner_roster(committee, np.random.default_rng(seed)),
        params=chain_mod.vc_preset_params(committee_size=committee),
        rng=np.random.default_rng(seed + 1),
        keys=keys,
    )


class TestBlockchainAggregation:
    def test_bit_identical_to_central(self):
        hp = TrainingHyperparams(local_epochs=1, minibatch_size=8, learning_rate=0.05)
        central_clients, _, _ = make_clients(5, 7)
        chain_clients, _, _ = make_clients(5, 7)
        central = run_training(FederationConfig(5, 5, hp), central_clients)
        bc = blockchain_state(chain_clients, 70)
        chained = run_training(
            FederationConfig(5, 5, hp, aggregator="blockchain"),
            chain_clients,
            blockchain=bc,
        )
        for rec_c, rec_b in zip(central, chained):
            assert nets_equal(rec_c.global_disc, rec_b.global_disc)
            assert nets_equal(rec_c.global_gen, rec_b.global_gen)
            assert rec_b.block_height == rec_b.round_index

    def test_chain_grows_one_block_per_round(self):
        hp = TrainingHyperparams(local_epochs=1, minibatch_size=8)
        clients, _, _ = make_clients(3, 8)
        bc = blockchain_state(clients, 80)
        run_training(
            FederationConfig(3, 4, hp, aggregator="blockchain"), clients, blockchain=bc
        )
        assert bc.ledger.height == 4
        chain_mod.verify_chain(bc.ledger)

    def test_dishonest_majority_fails_round_with_index(self):
        hp = TrainingHyperparams(local_epochs=1, minibatch_size=8)
        clients, _, _ = make_clients(3, 9)
        bc = blockchain_state(clients, 90)
        bc.honesty = {m.miner_id: "negative" for m in bc.miners[:3]}
        with pytest.raises(FailedRoundError) as err:
            run_training(
                FederationConfig(3, 2, hp, aggregator="blockchain"),
                clients,
                blockchain=bc,
            )
        assert err.value.round_index == 1

    def test_blockchain_mode_requires_state(self):
        clients, _, _ = make_clients(2, 10)
        cfg = FederationConfig(2, 1, TrainingHyperparams(), aggregator="blockchain")
        with pytest.raises(FederationError):
            run_training(cfg, clients)


class TestGenerateSynthetic:
    def test_zero_count_gives_empty_matrix(self):
        rng = np.random.default_rng(11)
        _, gen = toy_gan_architecture(2, 2, rng)
        out = generate_synthetic(gen, rng, 0)
        assert out.shape == (0, 2)

    def test_determinism(self):
        rng = np.random.default_rng(12)
        _, gen = toy_gan_architecture(2, 2, rng)
        a = generate_synthetic(gen, np.random.default_rng(5), 16)
        b = generate_synthetic(gen, np.random.default_rng(5), 16)
        assert np.array_equal(a, b)

    def test_reference_per_class_counts_sum(self):
        # three classes at 500 each, as in the scaled generation preset
        from fedgan_lab.datasets import SYNTHETIC_COUNT_PRESETS

        counts = SYNTHETIC_COUNT_PRESETS["table-darkcovid"]
        rng = np.random.default_rng(13)
        gens = {
            label: toy_gan_architecture(2, 2, np.random.default_rng(label))[1]
            for label in counts
        }
        samples, labels = generate_synthetic_per_class(gens, counts, rng)
        assert samples.shape[0] == 1500
        assert [int(np.sum(labels == c)) for c in sorted(counts)] == [500, 500, 500]


class TestExports:
    def test_history_csv_layout(self, tmp_path):
        clients, _, _ = make_clients(2, 14)
        cfg = FederationConfig(2, 2, TrainingHyperparams(local_epochs=1, minibatch_size=8))
        history = run_training(cfg, clients)
        path = tmp_path / "history.csv"
        export_history_csv(history, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "round,client_id,disc_loss,gen_loss"
        assert len(lines) == 1 + 2 * 2

    def test_manifest_records_naive_dp_accounting(self):
        cfg = FederationConfig(2, 3, TrainingHyperparams())
        manifest = run_manifest(cfg, 123, preset="blobs3-balanced",
                                dp=DpConfig(epsilon=0.3))
        assert manifest["seed"] == 123
        assert manifest["dp"]["epsilon_per_step"] == 0.3
        assert "naive" in manifest["dp"]["composition"]
