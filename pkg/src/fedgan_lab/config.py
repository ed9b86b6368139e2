"""Experiment configuration: JSON schema, parsing, invariant diagnostics.

A config file is a single JSON object; ``validate_config`` returns every
violated invariant as a (dotted.path, message) diagnostic without side
effects, and ``load_config`` raises ConfigError on the first failure.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .chain import ConsensusParams, vc_preset_params
from .datasets import BLOBS_PRESETS, MIXTURE_PRESETS
from .nets import TrainingHyperparams
from .privacy import DpConfig

SCENARIOS = (
    "standalone",
    "fedgan-central",
    "fedgan-blockchain",
    "verify-theory",
    "bench-consensus",
    "sweep-mixing",
    "sweep-epsilon",
)

# Scenarios that train a federation and therefore need that section.
_NEEDS_FEDERATION = ("standalone", "fedgan-central", "fedgan-blockchain")
_NEEDS_CONSENSUS = ("fedgan-blockchain", "bench-consensus")

OUTPUT_ROOT_ENV = "FEDGAN_LAB_OUT"

DATASET_PRESETS = tuple(sorted(BLOBS_PRESETS) + sorted(MIXTURE_PRESETS))


class ConfigError(ValueError):
    """Unusable experiment configuration."""


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int
    dataset_preset: str | None = None
    dataset_size: int = 500
    num_clients: int = 5
    global_rounds: int = 50
    hyperparams: TrainingHyperparams = field(default_factory=TrainingHyperparams)
    aggregator: str = "central-cloud"
    dp: DpConfig | None = None
    consensus: ConsensusParams | None = None
    gan_hidden: int = 16
    output_dir: str | None = None
    figures: bool = True


def _diag(diags: list, path: str, message: str) -> None:
    diags.append((path, message))


def validate_config(raw: dict) -> list[tuple[str, str]]:
    """Every violated invariant with a dotted path into the config."""
    diags: list[tuple[str, str]] = []
    if not isinstance(raw, dict):
        return [("$", "config must be a JSON object")]

    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        _diag(diags, "scenario", f"must be one of {', '.join(SCENARIOS)}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        _diag(diags, "seed", "must be an integer")

    preset = raw.get("dataset", {}).get("preset") if isinstance(raw.get("dataset"), dict) else None
    if preset is not None and preset not in DATASET_PRESETS:
        _diag(diags, "dataset.preset", f"unknown preset {preset!r}")
    dataset = raw.get("dataset", {})
    if isinstance(dataset, dict):
        size = dataset.get("size", 500)
        if not isinstance(size, int) or size < 1:
            _diag(diags, "dataset.size", "must be a positive integer")

    fed = raw.get("federation")
    if scenario in _NEEDS_FEDERATION and fed is None:
        _diag(diags, "federation", f"required for scenario {scenario!r}")
    if fed is not None:
        if not isinstance(fed, dict):
            _diag(diags, "federation", "must be an object")
        else:
            n = fed.get("num_clients", 1)
            if not isinstance(n, int) or n < 1:
                _diag(diags, "federation.num_clients", "must be >= 1")
            t = fed.get("global_rounds", 1)
            if not isinstance(t, int) or t < 1:
                _diag(diags, "federation.global_rounds", "must be >= 1")
            agg = fed.get("aggregator", "central-cloud")
            if agg not in ("central-cloud", "blockchain"):
                _diag(diags, "federation.aggregator",
                      "must be central-cloud or blockchain")
            hp = fed.get("hyperparams", {})
            if isinstance(hp, dict):
                if hp.get("local_epochs", 1) < 0:
                    _diag(diags, "federation.hyperparams.local_epochs", "must be >= 0")
                if hp.get("minibatch_size", 32) < 1:
                    _diag(diags, "federation.hyperparams.minibatch_size", "must be >= 1")
                if hp.get("learning_rate", 0.05) <= 0:
                    _diag(diags, "federation.hyperparams.learning_rate", "must be > 0")
            else:
                _diag(diags, "federation.hyperparams", "must be an object")

    dp = raw.get("dp")
    if dp is not None:
        if not isinstance(dp, dict):
            _diag(diags, "dp", "must be an object")
        else:
            if dp.get("epsilon", 1.0) <= 0:
                _diag(diags, "dp.epsilon", "must be > 0")
            if not 0.0 < dp.get("delta", 1e-5) < 1.0:
                _diag(diags, "dp.delta", "must be in (0, 1)")
            if dp.get("clip_norm", 1.0) <= 0:
                _diag(diags, "dp.clip_norm", "must be > 0")

    consensus = raw.get("consensus")
    if scenario in _NEEDS_CONSENSUS and consensus is None:
        _diag(diags, "consensus", f"required for scenario {scenario!r}")
    if consensus is not None:
        if not isinstance(consensus, dict):
            _diag(diags, "consensus", "must be an object")
        else:
            if consensus.get("latency_threshold", 1.0) <= 0:
                _diag(diags, "consensus.latency_threshold", "must be > 0")
            if consensus.get("broadcast_coeff", 0.5) < 0:
                _diag(diags, "consensus.broadcast_coeff", "must be >= 0")
            if consensus.get("committee_size", 10) < 1:
                _diag(diags, "consensus.committee_size", "must be >= 1")
            if consensus.get("partition_count", 10) < 1:
                _diag(diags, "consensus.partition_count", "must be >= 1")
            thr = consensus.get("approval_threshold", 0.51)
            if not 0.5 < thr <= 1.0:
                _diag(diags, "consensus.approval_threshold", "must be in (0.5, 1]")
    return diags


def parse_config(raw: dict) -> ExperimentConfig:
    """Parse a validated JSON object into the typed config."""
    problems = validate_config(raw)
    if problems:
        rendered = "; ".join(f"{p}: {m}" for p, m in problems)
        raise ConfigError(rendered)

    fed = raw.get("federation") or {}
    hp_raw = fed.get("hyperparams") or {}
    hyperparams = TrainingHyperparams(
        local_epochs=hp_raw.get("local_epochs", 1),
        minibatch_size=hp_raw.get("minibatch_size", 32),
        learning_rate=hp_raw.get("learning_rate", 0.05),
        noise_dim=hp_raw.get("noise_dim", 2),
        non_saturating=hp_raw.get("non_saturating", False),
        dropout=hp_raw.get("dropout", 0.0),
    )

    dp = None
    if raw.get("dp") is not None:
        d = raw["dp"]
        dp = DpConfig(
            epsilon=d["epsilon"],
            delta=d.get("delta", 1e-5),
            clip_norm=d.get("clip_norm", 1.0),
            explicit_noise_std=d.get("explicit_noise_std"),
        )

    consensus = None
    if raw.get("consensus") is not None:
        c = raw["consensus"]
        if "block_kilobytes" in c or not c:
            consensus = vc_preset_params(
                c.get("block_kilobytes", 500.0),
                committee_size=c.get("committee_size", 10),
                partition_count=c.get("partition_count"),
            )
        else:
            consensus = ConsensusParams(
                latency_threshold=c.get("latency_threshold", 1.0),
                broadcast_coeff=c.get("broadcast_coeff", 0.5),
                block_kilobits=c.get("block_kilobits", 4000.0),
                block_result_kilobits=c.get("block_result_kilobits", 400.0),
                part_kilobits=c.get("part_kilobits", 400.0),
                part_result_kilobits=c.get("part_result_kilobits", 40.0),
                part_cpu_cycles=c.get("part_cpu_cycles", 4e5),
                block_cpu_cycles=c.get("block_cpu_cycles", 4e6),
                partition_count=c.get("partition_count", 10),
                committee_size=c.get("committee_size", 10),
                approval_threshold=c.get("approval_threshold", 0.51),
            )

    dataset = raw.get("dataset") or {}
    return ExperimentConfig(
        scenario=raw["scenario"],
        seed=raw.get("seed", 0),
        dataset_preset=dataset.get("preset"),
        dataset_size=dataset.get("size", 500),
        num_clients=fed.get("num_clients", 5),
        global_rounds=fed.get("global_rounds", 50),
        hyperparams=hyperparams,
        aggregator=fed.get("aggregator", "central-cloud"),
        dp=dp,
        consensus=consensus,
        gan_hidden=raw.get("gan", {}).get("hidden", 16) if isinstance(raw.get("gan"), dict) else 16,
        output_dir=raw.get("output_dir"),
        figures=raw.get("figures", True),
    )


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from err
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err


def load_config(path) -> ExperimentConfig:
    return parse_config(read_config_file(path))


def resolve_output_dir(config: ExperimentConfig, override: str | None) -> Path:
    """--out flag beats config output_dir beats $FEDGAN_LAB_OUT root."""
    if override:
        return Path(override)
    if config.output_dir:
        return Path(config.output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / f"{config.scenario}-seed{config.seed}"
