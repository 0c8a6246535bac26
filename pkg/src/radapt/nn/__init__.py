"""Hand-differentiated quality network with per-domain normalisation."""

from radapt.nn.layers import log_softmax, softmax
from radapt.nn.model import (
    ADAPT_PHASE,
    SOURCE_PHASE,
    BranchStats,
    ForwardTrace,
    ModelParams,
    NetworkConfig,
    add_domain_branch,
    backward,
    branch_match_scores,
    conv1_channel_means,
    fingerprint,
    forward,
    freeze_mask,
    init_model,
    reset_branch_stats,
    select_branch,
)
from radapt.nn.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ADAPT_PHASE",
    "SOURCE_PHASE",
    "BranchStats",
    "ForwardTrace",
    "ModelParams",
    "NetworkConfig",
    "add_domain_branch",
    "backward",
    "branch_match_scores",
    "conv1_channel_means",
    "fingerprint",
    "forward",
    "freeze_mask",
    "init_model",
    "load_checkpoint",
    "log_softmax",
    "reset_branch_stats",
    "save_checkpoint",
    "select_branch",
    "softmax",
]
