"""fedgan-lab: desk-scale federated GAN training lab.

Modules cover the closed-form divergence oracles, a small MLP engine
with exact backprop, federated orchestration with plain or blockchain
aggregation, per-step differential privacy, a reputation-based consensus
simulator, and a downstream evaluation harness.
"""

__version__ = "0.1.0"

from .divergence import (  # noqa: F401
    DiscreteDistribution,
    DiscriminatorVector,
    SiteTriple,
    federated_optimum,
    federated_value,
    jsd,
    kl_divergence,
    optimal_discriminator,
    standalone_optimum,
    value_function,
)
from .nets import NetworkParameters, TrainingHyperparams  # noqa: F401
from .privacy import DpConfig  # noqa: F401
from .federation import ClientState, FederationConfig, run_training  # noqa: F401
from .chain import ConsensusParams, Ledger, MinerProfile  # noqa: F401
from .evaluation import LabeledDataset, MixingConfig, empirical_jsd  # noqa: F401
