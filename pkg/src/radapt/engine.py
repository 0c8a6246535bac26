"""Training, adaptation, and evaluation orchestration.

Source training fits the shared stack plus the source normalisation
branch on labelled data with early stopping on validation rank
correlation. Adaptation is source-free: it clones the source branch for
each target domain, re-estimates normalisation statistics from target
batches, and tunes only that branch's affine parameters against the
unsupervised objective. Sequential (continual) adaptation reuses the
same routine once per domain; branch isolation makes forgetting
structurally impossible. The adapt entry points take no source dataset
argument on purpose.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from radapt.data import Batch, Dataset, DomainData, batches, crop
from radapt.distmath import DEFAULT_SIGMA_FLOOR, QualityLabel, RatingScale, dist_mean
from radapt.errors import ConfigError, DataError, FitError
from radapt.losses import AdaptWeights, source_loss, total_adaptation_loss
from radapt.metrics import MetricReport, compute_metrics, srocc
from radapt.nn.checkpoint import save_checkpoint
from radapt.nn.layers import softmax
from radapt.nn.model import (
    ADAPT_PHASE,
    SOURCE_PHASE,
    ModelParams,
    NetworkConfig,
    add_domain_branch,
    backward,
    forward,
    freeze_mask,
    init_model,
    reset_branch_stats,
    select_branch,
)
from radapt.optim import adam_step, init_adam, make_lr

STATS_POLICIES = ("reset-then-estimate", "ema-from-source")
AUTO_DOMAIN = "auto"


# -------------------------------------------------------------- configuration


@dataclass(frozen=True)
class TrainConfig:
    """Scalars shared by source training, adaptation, and evaluation.

    ``weights`` is either one AdaptWeights applied to every target or a
    mapping that must cover each registered target by name. A ``None``
    learning rate means the phase default. ``stats_policy`` picks what a
    fresh target branch does with the copied source statistics: discard
    and re-estimate, or keep them as the EMA starting point.
    """

    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    adapt_steps: int = 1000
    checkpoint_every: int = 50
    seed: int = 0
    source_lr: float | None = None
    adapt_lr: float | None = None
    scale: RatingScale = RatingScale()
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    weights: AdaptWeights | Mapping[str, AdaptWeights] = AdaptWeights()
    ema_alpha: float = 0.1
    stats_policy: str = "reset-then-estimate"
    crop_size: int | None = None
    eval_batch_size: int = 64

    def __post_init__(self) -> None:
        for name in ("batch_size", "max_epochs", "patience", "adapt_steps",
                     "checkpoint_every", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("source_lr", "adapt_lr"):
            lr = getattr(self, name)
            if lr is not None and not (np.isfinite(lr) and lr > 0):
                raise ConfigError(f"{name} must be positive, got {lr}")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ConfigError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")
        if self.stats_policy not in STATS_POLICIES:
            raise ConfigError(
                f"stats_policy must be one of {STATS_POLICIES}, got {self.stats_policy!r}"
            )
        if self.sigma_floor <= 0:
            raise ConfigError(f"sigma_floor must be > 0, got {self.sigma_floor}")
        if self.crop_size is not None and self.crop_size < 4:
            raise ConfigError(f"crop_size must be >= 4, got {self.crop_size}")

    def weights_for(self, domain: str) -> AdaptWeights:
        if isinstance(self.weights, AdaptWeights):
            return self.weights
        if domain not in self.weights:
            raise ConfigError(f"no adaptation weights registered for domain {domain!r}")
        return self.weights[domain]


# -------------------------------------------------------------------- RunLog


@dataclass(frozen=True)
class StepRecord:
    step: int
    domain: str
    l_ent: float | None
    l_div: float | None
    l_gau: float | None
    total: float


@dataclass(frozen=True)
class ValRecord:
    epoch: int
    step: int
    srocc: float


RUNLOG_HEADER = "step,domain,l_ent,l_div,l_gau,total"


@dataclass
class RunLog:
    """Per-step loss decomposition, per-epoch validation, checkpoint ids."""

    steps: list[StepRecord] = field(default_factory=list)
    val_metrics: list[ValRecord] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    _last: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def log_step(
        self,
        step: int,
        domain: str,
        total: float,
        l_ent: float | None = None,
        l_div: float | None = None,
        l_gau: float | None = None,
    ) -> None:
        last = self._last.get(domain)
        if last is not None and step <= last:
            raise ValueError(
                f"step indices must increase per domain, got {step} after {last} "
                f"for {domain!r}"
            )
        self._last[domain] = step
        self.steps.append(StepRecord(step, domain, l_ent, l_div, l_gau, total))

    def extend(self, other: "RunLog") -> None:
        for rec in other.steps:
            self.log_step(rec.step, rec.domain, rec.total, rec.l_ent, rec.l_div, rec.l_gau)
        self.val_metrics.extend(other.val_metrics)
        self.checkpoints.extend(other.checkpoints)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RUNLOG_HEADER.split(","))
            for rec in self.steps:
                row = [rec.step, rec.domain]
                for v in (rec.l_ent, rec.l_div, rec.l_gau):
                    row.append("" if v is None else repr(v))
                row.append(repr(rec.total))
                writer.writerow(row)

    def write_val_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "srocc"])
            for rec in self.val_metrics:
                writer.writerow([rec.epoch, rec.step, repr(rec.srocc)])


# ------------------------------------------------------------------ plumbing


def _derive_seed(*parts: int) -> int:
    """Stable independent stream seed from structured integer parts."""
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _crop_images(images: np.ndarray, size, mode: str, rng) -> np.ndarray:
    if size is None:
        return images
    return np.stack([crop(img, size, mode, rng) for img in images])


def _epoch_batches(
    dataset: Dataset, config: TrainConfig, seed_parts: tuple[int, ...]
) -> Iterator[Batch]:
    """One shuffled training epoch, with per-image random crops if configured."""
    order_seed = _derive_seed(*seed_parts, 0)
    crop_rng = np.random.default_rng(_derive_seed(*seed_parts, 1))
    for batch in batches(dataset, config.batch_size, train=True, seed=order_seed):
        yield Batch(
            _crop_images(batch.images, config.crop_size, "random", crop_rng),
            batch.means,
            batch.variances,
        )


def _endless_batches(
    dataset: Dataset, config: TrainConfig, seed_parts: tuple[int, ...]
) -> Iterator[Batch]:
    epoch = 0
    while True:
        yield from _epoch_batches(dataset, config, seed_parts + (epoch,))
        epoch += 1


def _check_model_config(model: ModelParams, config: TrainConfig, ema: bool = True) -> None:
    if model.config.n_levels != config.scale.n_levels:
        raise ConfigError(
            f"model predicts {model.config.n_levels} levels but the scale has "
            f"{config.scale.n_levels}"
        )
    if ema and model.config.ema_alpha != config.ema_alpha:
        raise ConfigError(
            f"model was built with ema_alpha={model.config.ema_alpha}, "
            f"config asks for {config.ema_alpha}; statistics momentum is part "
            "of the persisted architecture"
        )


# ------------------------------------------------------------------ training


def train_source(
    config: TrainConfig,
    data: DomainData,
    network: NetworkConfig | None = None,
    out_dir=None,
) -> tuple[ModelParams, RunLog]:
    """Fit the source model; return the best-validation-SROCC checkpoint.

    Trains shared weights plus the source branch with Adam, validates
    after every epoch, stops after ``patience`` epochs without a new best.
    An undefined validation statistic (constant predictions) never counts
    as an improvement.
    """
    if network is None:
        network = NetworkConfig(n_levels=config.scale.n_levels, ema_alpha=config.ema_alpha)
    if data.train.n == 0 or data.val.n == 0:
        raise DataError("source training needs non-empty train and val splits")
    model = init_model(network, seed=config.seed)
    _check_model_config(model, config)
    source = model.source_domain
    state = init_adam(
        model, freeze_mask(model, SOURCE_PHASE), make_lr(SOURCE_PHASE, config.source_lr)
    )
    log = RunLog()
    best: ModelParams | None = None
    best_val = -np.inf
    best_epoch = 0
    stale = 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        for batch in _epoch_batches(data.train, config, (config.seed, epoch)):
            labels = [
                QualityLabel(float(m), float(v))
                for m, v in zip(batch.means, batch.variances)
            ]
            logits, trace = forward(model, batch.images, source, train=True)
            out = source_loss(logits, labels, config.scale, config.sigma_floor)
            grads = backward(model, trace, out.grad_logits)
            adam_step(model, grads, state)
            step += 1
            log.log_step(step, source, out.value)
        try:
            val = srocc(_predict_scores(model, data.val, source, config), data.val.means)
        except FitError:
            val = float("nan")
        log.val_metrics.append(ValRecord(epoch, step, val))
        if np.isfinite(val) and val > best_val:
            best, best_val, best_epoch, stale = model.clone(), val, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best is None:
        # validation never produced a defined statistic; fall back to final
        best, best_epoch = model.clone(), 0
    log.checkpoints.append(f"source-best-epoch{best_epoch:03d}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "source-best.ckpt", best)
    return best, log


# ---------------------------------------------------------------- adaptation


def adapt(
    params: ModelParams,
    targets: Mapping[str, Dataset],
    config: TrainConfig,
    out_dir=None,
) -> tuple[ModelParams, RunLog]:
    """Source-free adaptation of one or more target branches.

    Each target gets a branch cloned from source; only the branch affines
    train (Adam, adaptation rate), fed one batch per domain per step in
    round-robin. Returns the model snapshot with the lowest total loss
    over all steps; the input model is never mutated, and every shared or
    non-target parameter in the result is bit-identical to the input.
    Per-domain batch streams are seeded by domain name, not position, so
    adapting domains in a different order reproduces identical branches.
    """
    if not targets:
        raise ConfigError("adapt needs at least one target domain")
    for name in targets:
        config.weights_for(name)  # must be registered before any work happens
        if targets[name].n == 0:
            raise DataError(f"target {name!r} has no samples")
    model = params.clone()
    _check_model_config(model, config)
    names = list(targets)
    for name in names:
        add_domain_branch(model, name)
        if config.stats_policy == "reset-then-estimate":
            reset_branch_stats(model, name)
    mask = frozenset().union(*(freeze_mask(model, ADAPT_PHASE, n) for n in names))
    state = init_adam(model, mask, make_lr(ADAPT_PHASE, config.adapt_lr))
    streams = {
        name: _endless_batches(targets[name], config, (config.seed, _name_key(name)))
        for name in names
    }
    weights = {name: config.weights_for(name) for name in names}
    log = RunLog()
    tag = "+".join(names)
    best: ModelParams | None = None
    best_total = np.inf
    best_step = 0
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    for step in range(1, config.adapt_steps + 1):
        logits_by: dict[str, np.ndarray] = {}
        traces = {}
        for name in names:
            batch = next(streams[name])
            logits_by[name], traces[name] = forward(model, batch.images, name, train=True)
        total, per_domain = total_adaptation_loss(
            logits_by, weights, config.scale, config.sigma_floor
        )
        for name in names:
            d = per_domain[name]
            log.log_step(step, name, d.combined, d.entropy, d.diversity, d.gaussian)
        if total < best_total:
            # snapshot the exact state the loss was measured on, before update
            best, best_total, best_step = model.clone(), total, step
        grads: dict[str, np.ndarray] = {}
        for name in names:
            for pid, g in backward(model, traces[name], per_domain[name].grad_logits).items():
                grads[pid] = grads[pid] + g if pid in grads else g
        adam_step(model, grads, state)
        if out_dir is not None and step % config.checkpoint_every == 0:
            cid = f"adapt-{tag}-step{step:05d}"
            save_checkpoint(out_dir / f"{cid}.ckpt", model, state)
            log.checkpoints.append(cid)
    assert best is not None  # adapt_steps >= 1 guarantees one measurement
    log.checkpoints.append(f"adapt-{tag}-best-step{best_step:05d}")
    if out_dir is not None:
        save_checkpoint(out_dir / f"adapt-{tag}-best.ckpt", best)
    return best, log


def adapt_continual(
    params: ModelParams,
    targets: Sequence[tuple[str, Dataset]] | Mapping[str, Dataset],
    config: TrainConfig,
    out_dir=None,
) -> tuple[ModelParams, RunLog]:
    """Adapt to targets one after another, never revisiting earlier branches.

    Each stage runs ``adapt`` on a single domain starting from the previous
    stage's result, so a branch is only ever written during its own stage.
    With one target this is exactly ``adapt``.
    """
    pairs = list(targets.items()) if isinstance(targets, Mapping) else list(targets)
    if not pairs:
        raise ConfigError("adapt_continual needs at least one target domain")
    model = params
    log = RunLog()
    for name, dataset in pairs:
        sub_dir = None if out_dir is None else Path(out_dir) / name
        model, stage_log = adapt(model, {name: dataset}, config, sub_dir)
        log.extend(stage_log)
    return model, log


# ----------------------------------------------------------------- inference


class InferResult(NamedTuple):
    probs: np.ndarray  # (B, C) rating distributions
    scores: np.ndarray  # (B,) distribution means
    domain: str  # branch actually used


def infer(
    model: ModelParams,
    images: np.ndarray,
    domain: str = AUTO_DOMAIN,
    scale: RatingScale | None = None,
) -> InferResult:
    """Eval-mode rating distributions and scores for one batch.

    ``domain='auto'`` picks the branch whose running statistics best match
    the batch; the result reports which branch was used.
    """
    if scale is None:
        scale = RatingScale(n_levels=model.config.n_levels)
    chosen = select_branch(model, images) if domain == AUTO_DOMAIN else domain
    logits, _ = forward(model, images, chosen, train=False)
    probs = softmax(logits)
    return InferResult(probs, np.asarray(dist_mean(probs, scale)), chosen)


def _predict_scores(
    model: ModelParams, dataset: Dataset, domain: str, config: TrainConfig
) -> np.ndarray:
    scores = []
    for batch in batches(dataset, config.eval_batch_size, train=False):
        x = _crop_images(batch.images, config.crop_size, "center", None)
        scores.append(infer(model, x, domain, config.scale).scores)
    return np.concatenate(scores)


def evaluate(
    model: ModelParams,
    dataset: Dataset,
    domain: str,
    config: TrainConfig | None = None,
) -> MetricReport:
    """Center-crop inference over a labelled dataset, scored as a MetricReport."""
    if config is None:
        config = TrainConfig()
    if dataset.n < 10:
        raise FitError(f"evaluation needs at least 10 samples, got {dataset.n}")
    _check_model_config(model, config, ema=False)
    preds = _predict_scores(model, dataset, domain, config)
    return compute_metrics(preds, dataset.means)
