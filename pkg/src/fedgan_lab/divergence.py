"""Exact-arithmetic oracles over finite discrete distributions.

Everything here is closed-form math on probability vectors: KL and
Jensen-Shannon divergences, the optimal discriminator for a fixed
generator distribution, the adversarial value function realized as a
discrete sum, and the per-site / summed-over-sites optima. These serve
as ground truth for the training engine: a converged adversarial game on
distributions (p_real, p_gen) must land at ``-ln 4 + 2*JSD(p_real, p_gen)``,
and the many-site optimum at matched pairs is ``-N*ln 4``.

All logarithms are natural (nats), so JSD is bounded by ln 2.

Undefined KL (absolute-continuity violation) is reported as ``math.inf``
rather than raised, so sweep code can record "undefined" and move on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)
LN4 = math.log(4.0)

# Mass vectors must sum to one within this absolute tolerance.
MASS_TOLERANCE = 1e-12

# Discriminator values are pulled into [CLIP, 1-CLIP] before logs so a
# user-supplied D touching 0 or 1 cannot produce -inf terms.
DISCRIMINATOR_CLIP = 1e-12


class SupportMismatchError(ValueError):
    """Two vectors that must share a support have different lengths."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over a finite support.

    masses[i] is the probability of support point i. Entries must be
    non-negative and sum to one within ``MASS_TOLERANCE``.
    """

    masses: np.ndarray

    def __init__(self, masses) -> None:
        arr = np.asarray(masses, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("masses must be a non-empty 1-D vector")
        if np.any(arr < 0):
            raise ValueError("masses must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"masses must sum to 1 (got {total!r})")
        object.__setattr__(self, "masses", arr)

    def __len__(self) -> int:
        return int(self.masses.size)

    @staticmethod
    def from_weights(weights) -> "DiscreteDistribution":
        """Normalize an arbitrary non-negative weight vector."""
        arr = np.asarray(weights, dtype=float)
        total = arr.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return DiscreteDistribution(arr / total)


@dataclass(frozen=True)
class DiscriminatorVector:
    """Per-support-point discriminator outputs, each in [0, 1]."""

    values: np.ndarray

    def __init__(self, values) -> None:
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("values must be a non-empty 1-D vector")
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("discriminator values must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class SiteTriple:
    """One institution's (real, generated, discriminator) triple."""

    real: DiscreteDistribution
    gen: DiscreteDistribution
    disc: DiscriminatorVector

    def __post_init__(self) -> None:
        if not (len(self.real) == len(self.gen) == len(self.disc)):
            raise SupportMismatchError(
                "real, gen and disc must share one support size"
            )


def _require_same_support(a, b) -> None:
    if len(a) != len(b):
        raise SupportMismatchError(
            f"support sizes differ: {len(a)} vs {len(b)}"
        )


def kl_divergence(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """KL(p || q) in nats, with 0*ln(0/q) = 0.

    Returns ``math.inf`` when absolute continuity fails (some q_i = 0
    with p_i > 0); ``math.isinf`` on the result is the undefined flag.
    """
    _require_same_support(p, q)
    pm, qm = p.masses, q.masses
    support = pm > 0
    if np.any(qm[support] == 0):
        return math.inf
    ps = pm[support]
    return float(np.sum(ps * np.log(ps / qm[support])))


def jsd(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Jensen-Shannon divergence in nats: [KL(p||m) + KL(q||m)] / 2.

    m = (p+q)/2 dominates both arguments, so the result is always
    finite, symmetric, and within [0, ln 2].
    """
    _require_same_support(p, q)
    m = DiscreteDistribution.from_weights(p.masses + q.masses)
    return 0.5 * (kl_divergence(p, m) + kl_divergence(q, m))


def optimal_discriminator(
    p_d: DiscreteDistribution, p_g: DiscreteDistribution
) -> DiscriminatorVector:
    """Best-response discriminator p_d / (p_d + p_g), elementwise.

    Support points carrying no mass under either distribution get 0.5;
    they contribute nothing to any value sum.
    """
    _require_same_support(p_d, p_g)
    denom = p_d.masses + p_g.masses
    values = np.where(denom > 0, np.divide(p_d.masses, np.where(denom > 0, denom, 1.0)), 0.5)
    return DiscriminatorVector(values)


def value_function(
    p_d: DiscreteDistribution,
    p_g: DiscreteDistribution,
    disc: DiscriminatorVector,
) -> float:
    """Adversarial objective sum_i [p_d_i ln D_i + p_g_i ln(1 - D_i)].

    D entries are clamped to [DISCRIMINATOR_CLIP, 1-DISCRIMINATOR_CLIP]
    before the logs, so boundary discriminators stay finite.
    """
    _require_same_support(p_d, p_g)
    _require_same_support(p_d, disc)
    d = np.clip(disc.values, DISCRIMINATOR_CLIP, 1.0 - DISCRIMINATOR_CLIP)
    return float(np.sum(p_d.masses * np.log(d) + p_g.masses * np.log(1.0 - d)))


def standalone_optimum(
    p_d: DiscreteDistribution, p_g: DiscreteDistribution
) -> float:
    """Closed-form optimum of the single-site game: -ln 4 + 2*JSD(p_d, p_g)."""
    return -LN4 + 2.0 * jsd(p_d, p_g)


def federated_value(sites: list[SiteTriple]) -> float:
    """Sum of per-site value functions over a non-empty site list."""
    if not sites:
        raise ValueError("sites must be non-empty")
    return float(sum(value_function(s.real, s.gen, s.disc) for s in sites))


def federated_optimum(
    pairs: list[tuple[DiscreteDistribution, DiscreteDistribution]],
) -> float:
    """Closed-form federated optimum: -N*ln 4 + 2*sum_n JSD(p_d_n, p_g_n)."""
    if not pairs:
        raise ValueError("pairs must be non-empty")
    return -len(pairs) * LN4 + 2.0 * float(
        sum(jsd(p_d, p_g) for p_d, p_g in pairs)
    )
