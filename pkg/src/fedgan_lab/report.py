"""Figure rendering for scenario reports.

Every scenario writes delimited data first; these helpers render the
matching PNG next to each table. The Agg backend and pinned savefig
metadata keep output bytes stable for a given environment.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = dict(dpi=120, metadata={"Software": "fedgan-lab"})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def loss_curves(history, path) -> None:
    """Per-client discriminator/generator losses across rounds."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    client_ids = sorted(history[0].client_losses) if history else []
    rounds = [r.round_index for r in history]
    for cid in client_ids:
        disc = [r.client_losses[cid]["disc"][-1] for r in history]
        gen = [r.client_losses[cid]["gen"][-1] for r in history]
        axes[0].plot(rounds, disc, label=cid, linewidth=1)
        axes[1].plot(rounds, gen, label=cid, linewidth=1)
    axes[0].axhline(-np.log(4.0), color="k", linestyle=":", linewidth=1,
                    label="-ln 4")
    axes[0].set_title("discriminator objective")
    axes[1].set_title("generator loss")
    for ax in axes:
        ax.set_xlabel("global round")
        ax.legend(fontsize=7)
    _finish(fig, path)


def sample_overlay(real, generated, path) -> None:
    """Real-vs-generated scatter (2-D) or histogram overlay (1-D)."""
    real = np.asarray(real)
    generated = np.asarray(generated)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    if real.shape[1] == 1:
        ax.hist(real[:, 0], bins=40, alpha=0.5, density=True, label="real")
        ax.hist(generated[:, 0], bins=40, alpha=0.5, density=True, label="generated")
    else:
        ax.scatter(real[:, 0], real[:, 1], s=4, alpha=0.4, label="real")
        ax.scatter(generated[:, 0], generated[:, 1], s=4, alpha=0.4,
                   label="generated")
    ax.legend(fontsize=8)
    ax.set_title("real vs generated samples")
    _finish(fig, path)


def latency_curves(rows, path) -> None:
    """Verification latency against block size for both schemes."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    kb = [r.block_kilobytes for r in rows]
    ax.plot(kb, [r.por_s for r in rows], marker="o", label="lightweight (reputation)")
    ax.plot(kb, [r.dpos_s for r in rows], marker="s", label="whole-block baseline")
    ax.set_xlabel("block size (KB)")
    ax.set_ylabel("verification latency (s)")
    ax.legend(fontsize=8)
    _finish(fig, path)


def ratio_curve(ratio_to_accuracy: dict[float, float], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ratios = sorted(ratio_to_accuracy)
    ax.plot(ratios, [ratio_to_accuracy[r] for r in ratios], marker="o")
    ax.set_xlabel("synthetic-to-real mixing ratio")
    ax.set_ylabel("test accuracy")
    _finish(fig, path)


def epsilon_curve(eps_to_median: dict[float, float], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    eps = sorted(eps_to_median)
    ax.plot(eps, [eps_to_median[e] for e in eps], marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("privacy budget per step")
    ax.set_ylabel("median downstream macro-F1")
    _finish(fig, path)


def theory_margins(rows, path) -> None:
    """Bar chart of identity-check margins (tolerance minus error)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r[0] for r in rows]
    margins = [max(r[2] - r[1], 1e-18) for r in rows]
    ax.barh(names, margins, log=True)
    ax.set_xlabel("tolerance margin (log scale)")
    _finish(fig, path)
