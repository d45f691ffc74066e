"""
The probabilistic models of the library. Every model is a :class:`~libreparam.models.layout.ModelSpec` that exposes
its log-joint, the gradient of the log-joint with respect to the latent variables and a latent layout.
"""

from libreparam.models.beta_gamma_mf import BetaGammaMF, BetaGammaMFConfig, beta_gamma_mf
from libreparam.models.layout import LatentBlock, LatentLayout, ModelSpec
from libreparam.models.sparse_gamma_def import SparseGammaDEF, SparseGammaDEFConfig, sparse_gamma_def
from libreparam.models.toys import BetaBernoulliToy, GammaPoissonToy, beta_bernoulli_toy, gamma_poisson_toy

__all__ = [
    "BetaBernoulliToy",
    "BetaGammaMF",
    "BetaGammaMFConfig",
    "GammaPoissonToy",
    "LatentBlock",
    "LatentLayout",
    "ModelSpec",
    "SparseGammaDEF",
    "SparseGammaDEFConfig",
    "beta_bernoulli_toy",
    "beta_gamma_mf",
    "gamma_poisson_toy",
    "sparse_gamma_def",
]
