"""Matrix Fisher and Bingham distributions on SO(3) with analytic
entropies, cross-entropies and gradients, Monte-Carlo oracles, and a small
semi-supervised rotation-regression trainer."""

__version__ = "0.1.0"

from .fisher import (  # noqa: E402
    FisherParams,
    QuadratureConfig,
    dlogF_dS,
    entropy,
    expected_rotation,
    log_norm_const,
    log_pdf,
    mode,
)
from .bingham import BinghamParams, bingham_to_fisher, fisher_to_bingham  # noqa: E402
from .losses import cross_entropy_erform, cross_entropy_qform, nll_supervised, total_loss  # noqa: E402

__all__ = [
    "BinghamParams",
    "FisherParams",
    "QuadratureConfig",
    "bingham_to_fisher",
    "cross_entropy_erform",
    "cross_entropy_qform",
    "dlogF_dS",
    "entropy",
    "expected_rotation",
    "fisher_to_bingham",
    "log_norm_const",
    "log_pdf",
    "mode",
    "nll_supervised",
    "total_loss",
]
