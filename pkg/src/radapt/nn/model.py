"""Quality prediction network with domain-separated normalisation.

The architecture is a stack of conv 3x3 / batch-norm / relu / 2x2 average
pool blocks, a global average pool, and a head of two fully connected
layers with a relu between them, emitting one logit per rating level.
Every batch-norm layer keeps one branch per domain: its own affine pair
plus its own running statistics. A forward pass names the domain it runs
through; nothing belonging to other domains is read or written.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from radapt.errors import (
    DomainExistsError,
    MissingDomainError,
    ShapeError,
    TraceMismatchError,
    UninitializedStatisticsError,
)
from radapt.nn import layers

SOURCE_PHASE = "source-train"
ADAPT_PHASE = "adapt"


@dataclass(frozen=True)
class NetworkConfig:
    """Static architecture description."""

    in_channels: int = 3
    block_channels: tuple[int, ...] = (8, 16)
    head_hidden: int = 32
    n_levels: int = 5
    eps: float = 1e-5
    ema_alpha: float = 0.1
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if len(self.block_channels) < 1:
            raise ValueError("need at least one conv block")
        if min(self.block_channels) < 1 or self.head_hidden < 1 or self.n_levels < 2:
            raise ValueError("channel counts, head width and levels must be positive")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")
        np.dtype(self.dtype)  # validates

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)


@dataclass
class BranchStats:
    """Per-domain running statistics of one normalisation layer."""

    mean: np.ndarray
    var: np.ndarray
    num_batches: int = 0

    def copy(self) -> "BranchStats":
        return BranchStats(self.mean.copy(), self.var.copy(), self.num_batches)


@dataclass
class ForwardTrace:
    """Cached intermediates of one train-mode forward pass."""

    domain: str
    version: int
    batch_shape: tuple[int, ...]
    block_caches: list = field(default_factory=list)  # (conv, bn, relu, pool) caches
    batch_stats: list = field(default_factory=list)  # (mean, var) per bn layer
    gap_cache: object = None
    fc1_cache: object = None
    relu_head_cache: object = None
    fc2_cache: object = None


class ModelParams:
    """All trainable parameters plus per-domain statistics.

    Parameters live in one ordered dict keyed by a stable id
    (``block0.conv.weight``, ``block1.bn.source.gamma``, ``head.fc2.bias``).
    ``version`` counts parameter mutations; a ForwardTrace is only valid
    for backward while the version it recorded still matches.
    """

    def __init__(self, config: NetworkConfig, source_domain: str = "source"):
        self.config = config
        self.source_domain = source_domain
        self.domains: list[str] = []
        self._params: dict[str, np.ndarray] = {}
        # (block index, domain) -> BranchStats
        self._stats: dict[tuple[int, str], BranchStats] = {}
        self.version = 0

    # ------------------------------------------------------------- registry

    @property
    def n_blocks(self) -> int:
        return len(self.config.block_channels)

    def param_ids(self) -> list[str]:
        """Ids in declaration order: shared stack, then branches by domain."""
        ids = []
        for i in range(self.n_blocks):
            ids += [f"block{i}.conv.weight", f"block{i}.conv.bias"]
        ids += ["head.fc1.weight", "head.fc1.bias", "head.fc2.weight", "head.fc2.bias"]
        for d in self.domains:
            for i in range(self.n_blocks):
                ids += [f"block{i}.bn.{d}.gamma", f"block{i}.bn.{d}.beta"]
        return ids

    def shared_param_ids(self) -> list[str]:
        return [p for p in self.param_ids() if ".bn." not in p]

    def branch_param_ids(self, domain: str) -> list[str]:
        self._require_domain(domain)
        return [
            f"block{i}.bn.{domain}.{name}"
            for i in range(self.n_blocks)
            for name in ("gamma", "beta")
        ]

    def get_param(self, pid: str) -> np.ndarray:
        return self._params[pid]

    def set_param(self, pid: str, value: np.ndarray) -> None:
        old = self._params[pid]
        if value.shape != old.shape:
            raise ShapeError(f"{pid}: expected shape {old.shape}, got {value.shape}")
        self._params[pid] = np.asarray(value, dtype=old.dtype)
        self.version += 1

    def stats(self, block: int, domain: str) -> BranchStats:
        self._require_domain(domain)
        return self._stats[(block, domain)]

    def _require_domain(self, domain: str) -> None:
        if domain not in self.domains:
            raise MissingDomainError(
                f"domain {domain!r} is not registered (have {self.domains})"
            )

    # ------------------------------------------------------------ structure

    def clone(self) -> "ModelParams":
        out = ModelParams(self.config, self.source_domain)
        out.domains = list(self.domains)
        out._params = {k: v.copy() for k, v in self._params.items()}
        out._stats = {k: v.copy() for k, v in self._stats.items()}
        out.version = self.version
        return out

    def astype(self, dtype) -> "ModelParams":
        """Copy with parameters and statistics cast to another dtype."""
        cfg = NetworkConfig(
            in_channels=self.config.in_channels,
            block_channels=self.config.block_channels,
            head_hidden=self.config.head_hidden,
            n_levels=self.config.n_levels,
            eps=self.config.eps,
            ema_alpha=self.config.ema_alpha,
            dtype=np.dtype(dtype).name,
        )
        out = ModelParams(cfg, self.source_domain)
        out.domains = list(self.domains)
        out._params = {k: v.astype(dtype) for k, v in self._params.items()}
        out._stats = {
            k: BranchStats(v.mean.astype(dtype), v.var.astype(dtype), v.num_batches)
            for k, v in self._stats.items()
        }
        return out


def _check_domain_name(name: str) -> None:
    # domain names become parameter-id segments split on "."
    if not name or not all(ch.isalnum() or ch in "_-" for ch in name):
        raise ValueError(f"domain name must match [A-Za-z0-9_-]+, got {name!r}")


def init_model(config: NetworkConfig, seed: int, source_domain: str = "source") -> ModelParams:
    """He-style initialisation; deterministic for a given seed."""
    _check_domain_name(source_domain)
    rng = np.random.default_rng(seed)
    dt = config.np_dtype
    model = ModelParams(config, source_domain)
    model.domains = [source_domain]
    c_prev = config.in_channels
    for i, c_out in enumerate(config.block_channels):
        fan_in = c_prev * 9
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_prev, 3, 3))
        model._params[f"block{i}.conv.weight"] = w.astype(dt)
        model._params[f"block{i}.conv.bias"] = np.zeros(c_out, dtype=dt)
        model._params[f"block{i}.bn.{source_domain}.gamma"] = np.ones(c_out, dtype=dt)
        model._params[f"block{i}.bn.{source_domain}.beta"] = np.zeros(c_out, dtype=dt)
        model._stats[(i, source_domain)] = BranchStats(
            np.zeros(c_out, dtype=dt), np.ones(c_out, dtype=dt), 0
        )
        c_prev = c_out
    w1 = rng.normal(0.0, np.sqrt(2.0 / c_prev), size=(config.head_hidden, c_prev))
    model._params["head.fc1.weight"] = w1.astype(dt)
    model._params["head.fc1.bias"] = np.zeros(config.head_hidden, dtype=dt)
    w2 = rng.normal(0.0, np.sqrt(2.0 / config.head_hidden), size=(config.n_levels, config.head_hidden))
    model._params["head.fc2.weight"] = w2.astype(dt)
    model._params["head.fc2.bias"] = np.zeros(config.n_levels, dtype=dt)
    return model


def add_domain_branch(
    model: ModelParams, new_domain: str, source_domain: str | None = None
) -> ModelParams:
    """Register a new domain by copying an existing branch.

    Affines and running statistics are copied, so an eval-mode forward
    through the new branch reproduces the copied branch exactly until the
    new branch is trained.
    """
    src = model.source_domain if source_domain is None else source_domain
    _check_domain_name(new_domain)
    if new_domain in model.domains:
        raise DomainExistsError(f"domain {new_domain!r} already registered")
    if src not in model.domains:
        raise MissingDomainError(f"copy source {src!r} is not registered")
    for i in range(model.n_blocks):
        model._params[f"block{i}.bn.{new_domain}.gamma"] = model._params[
            f"block{i}.bn.{src}.gamma"
        ].copy()
        model._params[f"block{i}.bn.{new_domain}.beta"] = model._params[
            f"block{i}.bn.{src}.beta"
        ].copy()
        model._stats[(i, new_domain)] = model._stats[(i, src)].copy()
    model.domains.append(new_domain)
    model.version += 1
    return model


def reset_branch_stats(model: ModelParams, domain: str) -> None:
    """Mark a branch's statistics as never estimated.

    The next train-mode batch through the branch then seeds the running
    statistics directly instead of blending with the copied values.
    """
    model._require_domain(domain)
    for i in range(model.n_blocks):
        st = model._stats[(i, domain)]
        st.mean[:] = 0.0
        st.var[:] = 1.0
        st.num_batches = 0


def freeze_mask(model: ModelParams, phase: str, domain: str | None = None) -> frozenset[str]:
    """Ids of the parameters trainable in a phase.

    Source training covers the shared stack plus the source branch's
    affines; adaptation covers exactly the named domain's affines.
    """
    if phase == SOURCE_PHASE:
        return frozenset(
            model.shared_param_ids() + model.branch_param_ids(model.source_domain)
        )
    if phase == ADAPT_PHASE:
        if domain is None:
            raise ValueError("adapt phase needs a domain")
        if domain == model.source_domain:
            raise ValueError("adaptation must not touch the source branch")
        return frozenset(model.branch_param_ids(domain))
    raise ValueError(f"unknown phase {phase!r}")


def _check_input(model: ModelParams, x: np.ndarray) -> np.ndarray:
    cfg = model.config
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeError(
            f"expected input (B, {cfg.in_channels}, H, W), got {x.shape}"
        )
    div = 2**model.n_blocks
    if x.shape[2] % div or x.shape[3] % div:
        raise ShapeError(
            f"spatial dims must be divisible by {div} for {model.n_blocks} pooling "
            f"stages, got {x.shape[2]}x{x.shape[3]}"
        )
    return np.ascontiguousarray(x, dtype=cfg.np_dtype)


def forward(model: ModelParams, x: np.ndarray, domain: str, train: bool = False):
    """Run the network through one domain's branches.

    Train mode whitens with the live batch statistics, folds them into the
    branch's running statistics, and returns a trace for backward. Eval
    mode uses the stored statistics and mutates nothing.
    """
    model._require_domain(domain)
    x = _check_input(model, x)
    cfg = model.config
    trace = ForwardTrace(domain=domain, version=model.version, batch_shape=x.shape)
    for i in range(model.n_blocks):
        w = model._params[f"block{i}.conv.weight"]
        b = model._params[f"block{i}.conv.bias"]
        gamma = model._params[f"block{i}.bn.{domain}.gamma"]
        beta = model._params[f"block{i}.bn.{domain}.beta"]
        x, conv_cache = layers.conv3x3_forward(x, w, b)
        st = model._stats[(i, domain)]
        if train:
            x, bmean, bvar, bn_cache = layers.batchnorm_train_forward(x, gamma, beta, cfg.eps)
            if st.num_batches == 0:
                # first estimate seeds the statistics outright
                st.mean[:] = bmean
                st.var[:] = bvar
            else:
                a = cfg.ema_alpha
                st.mean[:] = (1.0 - a) * st.mean + a * bmean
                st.var[:] = (1.0 - a) * st.var + a * bvar
            st.num_batches += 1
            trace.batch_stats.append((bmean, bvar))
        else:
            if st.num_batches == 0:
                raise UninitializedStatisticsError(
                    f"branch {domain!r} of block {i} has no estimated statistics"
                )
            x = layers.batchnorm_eval_forward(x, gamma, beta, st.mean, st.var, cfg.eps)
            bn_cache = None
        x, relu_cache = layers.relu_forward(x)
        x, pool_cache = layers.avgpool2_forward(x)
        trace.block_caches.append((conv_cache, bn_cache, relu_cache, pool_cache))
    x, trace.gap_cache = layers.global_avgpool_forward(x)
    x, trace.fc1_cache = layers.linear_forward(
        x, model._params["head.fc1.weight"], model._params["head.fc1.bias"]
    )
    x, trace.relu_head_cache = layers.relu_forward(x)
    logits, trace.fc2_cache = layers.linear_forward(
        x, model._params["head.fc2.weight"], model._params["head.fc2.bias"]
    )
    if not train:
        return logits, None
    trace.version = model.version  # parameters did not change during forward
    return logits, trace


def backward(model: ModelParams, trace: ForwardTrace, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of sum(logits * grad_logits) w.r.t. every parameter.

    Returns one entry per trainable parameter id; branches of domains other
    than the traced one get zero gradients. The trace must come from a
    train-mode forward and the parameters must not have changed since.
    """
    if trace is None or trace.block_caches and trace.block_caches[0][1] is None:
        raise TraceMismatchError("backward needs a train-mode trace")
    if trace.version != model.version:
        raise TraceMismatchError(
            "parameters changed since the trace was recorded "
            f"(trace v{trace.version}, model v{model.version})"
        )
    grad_logits = np.asarray(grad_logits, dtype=model.config.np_dtype)
    if grad_logits.shape != (trace.batch_shape[0], model.config.n_levels):
        raise ShapeError(
            f"grad_logits must be (B, {model.config.n_levels}), got {grad_logits.shape}"
        )
    d = trace.domain
    grads = {pid: np.zeros_like(model._params[pid]) for pid in model.param_ids()}

    g, gw, gb = layers.linear_backward(
        grad_logits, trace.fc2_cache, model._params["head.fc2.weight"]
    )
    grads["head.fc2.weight"] = gw
    grads["head.fc2.bias"] = gb
    g = layers.relu_backward(g, trace.relu_head_cache)
    g, gw, gb = layers.linear_backward(g, trace.fc1_cache, model._params["head.fc1.weight"])
    grads["head.fc1.weight"] = gw
    grads["head.fc1.bias"] = gb
    g = layers.global_avgpool_backward(g, trace.gap_cache)
    for i in reversed(range(model.n_blocks)):
        conv_cache, bn_cache, relu_cache, pool_cache = trace.block_caches[i]
        g = layers.avgpool2_backward(g, pool_cache)
        g = layers.relu_backward(g, relu_cache)
        gamma = model._params[f"block{i}.bn.{d}.gamma"]
        g, ggamma, gbeta = layers.batchnorm_train_backward(g, bn_cache, gamma)
        grads[f"block{i}.bn.{d}.gamma"] = ggamma
        grads[f"block{i}.bn.{d}.beta"] = gbeta
        g, gw, gb = layers.conv3x3_backward(g, conv_cache)
        grads[f"block{i}.conv.weight"] = gw
        grads[f"block{i}.conv.bias"] = gb
    return grads


def conv1_channel_means(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Per-channel means of the first conv's output over the whole batch."""
    x = _check_input(model, x)
    y, _ = layers.conv3x3_forward(
        x, model._params["block0.conv.weight"], model._params["block0.conv.bias"]
    )
    return y.mean(axis=(0, 2, 3)).astype(np.float64)


def branch_match_scores(model: ModelParams, x: np.ndarray) -> dict[str, float]:
    """How far a batch sits from each branch's first-layer statistics.

    Lower is a better match: sum over channels of the squared gap between
    the batch mean and the branch's running mean, scaled by the branch's
    running variance. Branches with no estimated statistics are skipped.
    """
    means = conv1_channel_means(model, x)
    eps = model.config.eps
    scores: dict[str, float] = {}
    for dom in model.domains:
        st = model._stats[(0, dom)]
        if st.num_batches == 0:
            continue
        gap = means - st.mean.astype(np.float64)
        scores[dom] = float(np.sum(gap**2 / (st.var.astype(np.float64) + eps)))
    if not scores:
        raise MissingDomainError("no branch has estimated statistics")
    return scores


def select_branch(model: ModelParams, x: np.ndarray) -> str:
    """Pick the branch whose statistics the batch matches best."""
    scores = branch_match_scores(model, x)
    return min(scores, key=lambda d: (scores[d], model.domains.index(d)))


def fingerprint(model: ModelParams, pids: list[str] | None = None, stats: bool = False) -> str:
    """Hex digest over selected parameter bytes (and optionally statistics).

    When pids restricts the hash to particular parameters, the statistics
    included are those of the domains named in that selection (all domains
    if the selection touches none).
    """
    h = hashlib.sha256()
    selected = pids if pids is not None else model.param_ids()
    for pid in selected:
        h.update(pid.encode())
        h.update(np.ascontiguousarray(model._params[pid]).tobytes())
    if stats:
        wanted = None
        if pids is not None:
            named = {p.split(".")[2] for p in selected if ".bn." in p}
            wanted = named or None
        for key in sorted(model._stats, key=lambda k: (k[0], k[1])):
            if wanted is not None and key[1] not in wanted:
                continue
            st = model._stats[key]
            h.update(repr(key).encode())
            h.update(np.ascontiguousarray(st.mean).tobytes())
            h.update(np.ascontiguousarray(st.var).tobytes())
            h.update(str(st.num_batches).encode())
    return h.hexdigest()
