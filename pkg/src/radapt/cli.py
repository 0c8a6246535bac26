"""Command-line entry point wiring run configs to training and analysis.

Run configuration is flat structured text (INI: ``key = value`` under
``[section]`` headers, one section per domain), overridable from the
command line with repeated ``--set section.key=value`` flags.  Commands
emit checkpoints plus CSV reports; all numeric output carries 9
significant digits.  The only timestamp in any output sits on the first
header line of the run logs, so reruns with identical inputs and seeds
are byte-identical apart from that line.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import dataclasses
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import load_dataset, load_domain_data, read_manifest
from .distmath import QualityLabel, RatingScale, discretize
from .engine import (
    RUNLOG_HEADER,
    RunLog,
    TrainConfig,
    adapt,
    adapt_continual,
    evaluate,
    train_source,
)
from .errors import (
    ConfigError,
    DataError,
    DomainExistsError,
    FitError,
    MissingDomainError,
    RadaptError,
    ShapeError,
    UninitializedStatisticsError,
)
from .losses import AdaptWeights
from .metrics import (
    CSV_HEADER,
    RaterHistogram,
    cluster_distributions,
    compute_metrics,
    gof_fit,
)
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.model import NetworkConfig, select_branch

COMMANDS = ("train-source", "adapt", "adapt-continual", "evaluate", "gof", "cluster")

DOMAIN_PREFIX = "domain:"

# every key a config file may contain; unknown keys are refused so that a
# typo cannot silently fall back to a default
_KNOWN_KEYS = {
    "train": {
        "batch_size", "max_epochs", "patience", "adapt_steps", "checkpoint_every",
        "seed", "source_lr", "adapt_lr", "sigma_floor", "ema_alpha", "stats_policy",
        "crop_size", "eval_batch_size", "lambda_ent", "lambda_div", "lambda_gau",
    },
    "scale": {"lower", "upper", "n_levels"},
    "network": {"in_channels", "block_channels", "head_hidden"},
    "source": {"manifest"},
    "model": {"checkpoint"},
    "evaluate": {"manifest", "split", "domain"},
    "gof": {
        "n_histograms", "n_raters", "n_levels", "seed",
        "mu_lo", "mu_hi", "sigma_lo", "sigma_hi", "histograms",
    },
    "cluster": {"histograms", "k", "seed", "n_restarts"},
}
_DOMAIN_KEYS = {"manifest", "lambda_ent", "lambda_div", "lambda_gau"}


@dataclass
class CliConfig:
    """Parsed command line: one command plus its shared flags."""

    command: str
    config_path: str
    out_dir: str
    overrides: tuple[str, ...] = ()
    seeds: tuple[int, ...] = ()
    domain: str | None = None
    parallel: bool = False


def parse_args(argv) -> CliConfig:
    parser = argparse.ArgumentParser(
        prog="radapt",
        description="rating-distribution quality model: train, adapt, evaluate",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run config file (INI)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", action="append", type=int, default=[],
                       help="seed override; repeat to fan out over seeds")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       dest="overrides", help="config override; repeatable")
        p.add_argument("--domain", default=None,
                       help="branch for evaluation ('auto' infers it)")
        p.add_argument("--parallel", action="store_true",
                       help="fan seeds out over processes (merge order fixed by seed index)")
    ns = parser.parse_args(argv)
    return CliConfig(
        command=ns.command,
        config_path=ns.config,
        out_dir=ns.out,
        overrides=tuple(ns.overrides),
        seeds=tuple(ns.seed),
        domain=ns.domain,
        parallel=ns.parallel,
    )


# ------------------------------------------------------------- config loading


def load_run_config(path, overrides=()) -> configparser.ConfigParser:
    """Parse the INI run config, apply overrides, and validate key names."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(p.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not section or not name:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][name.strip()] = value.strip()
    for section in cp.sections():
        if section.startswith(DOMAIN_PREFIX):
            allowed = _DOMAIN_KEYS
            if not section[len(DOMAIN_PREFIX):]:
                raise ConfigError("domain section needs a name: [domain:NAME]")
        elif section in _KNOWN_KEYS:
            allowed = _KNOWN_KEYS[section]
        else:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
    return cp


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc


def _optional_float(raw: str):
    return None if raw.lower() in ("", "none", "default") else float(raw)


def _optional_int(raw: str):
    return None if raw.lower() in ("", "none") else int(raw)


def _scale(cp) -> RatingScale:
    return RatingScale(
        _get(cp, "scale", "lower", float, 1.0),
        _get(cp, "scale", "upper", float, 5.0),
        _get(cp, "scale", "n_levels", int, 5),
    )


def _global_weights(cp) -> AdaptWeights:
    return AdaptWeights(
        lambda_div=_get(cp, "train", "lambda_div", float, 1.0),
        lambda_gau=_get(cp, "train", "lambda_gau", float, 0.2),
        lambda_ent=_get(cp, "train", "lambda_ent", float, 1.0),
    )


def _domain_sections(cp) -> dict[str, configparser.SectionProxy]:
    out = {}
    for section in cp.sections():
        if section.startswith(DOMAIN_PREFIX):
            out[section[len(DOMAIN_PREFIX):]] = cp[section]
    return out


def _train_config(cp, seed: int | None) -> TrainConfig:
    base = _global_weights(cp)
    weights: AdaptWeights | dict[str, AdaptWeights] = base
    domains = _domain_sections(cp)
    if any(k.startswith("lambda_") for sec in domains.values() for k in sec):
        weights = {
            name: dataclasses.replace(
                base,
                **{
                    k: float(sec[k])
                    for k in ("lambda_ent", "lambda_div", "lambda_gau")
                    if k in sec
                },
            )
            for name, sec in domains.items()
        }
    defaults = TrainConfig()
    return TrainConfig(
        batch_size=_get(cp, "train", "batch_size", int, defaults.batch_size),
        max_epochs=_get(cp, "train", "max_epochs", int, defaults.max_epochs),
        patience=_get(cp, "train", "patience", int, defaults.patience),
        adapt_steps=_get(cp, "train", "adapt_steps", int, defaults.adapt_steps),
        checkpoint_every=_get(cp, "train", "checkpoint_every", int, defaults.checkpoint_every),
        seed=seed if seed is not None else _get(cp, "train", "seed", int, defaults.seed),
        source_lr=_get(cp, "train", "source_lr", _optional_float, None),
        adapt_lr=_get(cp, "train", "adapt_lr", _optional_float, None),
        scale=_scale(cp),
        sigma_floor=_get(cp, "train", "sigma_floor", float, defaults.sigma_floor),
        weights=weights,
        ema_alpha=_get(cp, "train", "ema_alpha", float, defaults.ema_alpha),
        stats_policy=_get(cp, "train", "stats_policy", str, defaults.stats_policy),
        crop_size=_get(cp, "train", "crop_size", _optional_int, None),
        eval_batch_size=_get(cp, "train", "eval_batch_size", int, defaults.eval_batch_size),
    )


def _network_config(cp, config: TrainConfig) -> NetworkConfig:
    channels = _get(
        cp, "network", "block_channels",
        lambda raw: tuple(int(c) for c in raw.split(",")), (8, 16),
    )
    return NetworkConfig(
        in_channels=_get(cp, "network", "in_channels", int, 3),
        block_channels=channels,
        head_hidden=_get(cp, "network", "head_hidden", int, 32),
        n_levels=config.scale.n_levels,
        ema_alpha=config.ema_alpha,
    )


def _require(cp, section, key) -> str:
    if not cp.has_option(section, key):
        raise ConfigError(f"config needs {section}.{key} for this command")
    return cp.get(section, key)


def _reject_source_data(cp) -> None:
    """Adaptation is source-free: no source dataset may even be named."""
    if cp.has_section("source"):
        raise ConfigError(
            "adaptation config must not reference source data "
            "(remove the [source] section; adaptation is source-free)"
        )
    for section in cp.sections():
        for key in cp[section]:
            if "source_manifest" in key:
                raise ConfigError(
                    f"adaptation config must not reference source data "
                    f"(found {section}.{key}; adaptation is source-free)"
                )


# ------------------------------------------------------------------ reporting


def _fmt(value) -> str:
    """Numeric CSV cell: 9 significant digits."""
    v = float(value)
    return f"{v:.9g}"


def _resolved_lines(cp) -> list[str]:
    lines = []
    for section in sorted(cp.sections()):
        for key in sorted(cp[section]):
            lines.append(f"# {section}.{key} = {cp.get(section, key)}")
    return lines


def _write_runlog(path, log: RunLog, command: str, cp) -> None:
    """RunLog CSV with a metadata header; timestamp only on the first line."""
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    with open(path, "w", newline="") as fh:
        fh.write(f"# radapt {command} {stamp}\n")
        for line in _resolved_lines(cp):
            fh.write(line + "\n")
        fh.write(RUNLOG_HEADER + "\n")
        for rec in log.steps:
            cells = [str(rec.step), rec.domain]
            for v in (rec.l_ent, rec.l_div, rec.l_gau):
                cells.append("" if v is None else _fmt(v))
            cells.append(_fmt(rec.total))
            fh.write(",".join(cells) + "\n")


def _write_val_log(path, log: RunLog) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("epoch,step,srocc\n")
        for rec in log.val_metrics:
            fh.write(f"{rec.epoch},{rec.step},{_fmt(rec.srocc)}\n")


def _out_dir(cli: CliConfig) -> Path:
    out = Path(cli.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".radapt-writable"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out} ({exc})") from exc
    return out


def _seed_list(cli: CliConfig, cp) -> list[int]:
    if cli.seeds:
        return list(cli.seeds)
    return [_get(cp, "train", "seed", int, 0)]


def _single_seed(cli: CliConfig, cp, section: str, default: int) -> int:
    if len(cli.seeds) > 1:
        raise ConfigError(f"{cli.command} does not fan out over seeds")
    if cli.seeds:
        return cli.seeds[0]
    return _get(cp, section, "seed", int, default)


# ------------------------------------------------------------------- commands


def _train_one_seed(config_path, overrides, out_dir, seed):
    """One train-source run; returns (seed, srocc, plcc, rmse) on the test split."""
    cp = load_run_config(config_path, overrides)
    config = _train_config(cp, seed)
    data = load_domain_data(_require(cp, "source", "manifest"), target=config.scale)
    model, log = train_source(config, data, _network_config(cp, config))
    out = Path(out_dir)
    save_checkpoint(out / f"source-best-seed{seed:03d}.ckpt", model)
    _write_runlog(out / f"train-log-seed{seed:03d}.csv", log, "train-source", cp)
    _write_val_log(out / f"val-log-seed{seed:03d}.csv", log)
    report = evaluate(model, data.test, "source", config)
    return seed, report.srocc, report.plcc, report.rmse


def _adapt_one_seed(config_path, overrides, out_dir, seed, continual):
    cp = load_run_config(config_path, overrides)
    _reject_source_data(cp)
    config = _train_config(cp, seed)
    model, _ = load_checkpoint(_require(cp, "model", "checkpoint"))
    domains = _domain_sections(cp)
    if not domains:
        raise ConfigError("adaptation config needs at least one [domain:NAME] section")
    targets = []
    for name, sec in domains.items():
        if "manifest" not in sec:
            raise ConfigError(f"section [domain:{name}] needs a manifest key")
        targets.append((name, load_domain_data(sec["manifest"], target=config.scale).train))
    command = "adapt-continual" if continual else "adapt"
    if continual:
        adapted, log = adapt_continual(model, targets, config)
    else:
        adapted, log = adapt(model, dict(targets), config)
    out = Path(out_dir)
    save_checkpoint(out / f"adapted-seed{seed:03d}.ckpt", adapted)
    _write_runlog(out / f"adapt-log-seed{seed:03d}.csv", log, command, cp)
    return seed


def _fan_out(cli: CliConfig, worker, args_per_seed):
    """Run one job per seed; merge order is fixed by seed index either way."""
    if cli.parallel and len(args_per_seed) > 1:
        with concurrent.futures.ProcessPoolExecutor() as pool:
            return list(pool.map(worker, *zip(*args_per_seed)))
    return [worker(*args) for args in args_per_seed]


def cmd_train_source(cli: CliConfig) -> int:
    cp = load_run_config(cli.config_path, cli.overrides)
    out = _out_dir(cli)
    seeds = _seed_list(cli, cp)
    jobs = [(cli.config_path, cli.overrides, str(out), s) for s in seeds]
    rows = _fan_out(cli, _train_one_seed, jobs)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        fh.write("seed,srocc,plcc,rmse\n")
        for seed, srocc, plcc, rmse in rows:
            fh.write(f"{seed},{_fmt(srocc)},{_fmt(plcc)},{_fmt(rmse)}\n")
        fh.write(
            "mean,"
            f"{_fmt(np.mean([r[1] for r in rows]))},"
            f"{_fmt(np.mean([r[2] for r in rows]))},"
            f"{_fmt(np.mean([r[3] for r in rows]))}\n"
        )
    return 0


def cmd_adapt(cli: CliConfig, continual: bool) -> int:
    cp = load_run_config(cli.config_path, cli.overrides)
    _reject_source_data(cp)
    out = _out_dir(cli)
    seeds = _seed_list(cli, cp)
    jobs = [(cli.config_path, cli.overrides, str(out), s, continual) for s in seeds]
    _fan_out(cli, _adapt_one_seed, jobs)
    return 0


def _center_crop_all(images: np.ndarray, size: int | None) -> np.ndarray:
    if size is None:
        return images
    h, w = images.shape[2], images.shape[3]
    if size > h or size > w:
        raise ShapeError(f"crop size {size} exceeds image extent {h}x{w}")
    top, left = (h - size) // 2, (w - size) // 2
    return images[:, :, top:top + size, left:left + size]


def cmd_evaluate(cli: CliConfig) -> int:
    cp = load_run_config(cli.config_path, cli.overrides)
    out = _out_dir(cli)
    config = _train_config(cp, _single_seed(cli, cp, "train", 0))
    model, _ = load_checkpoint(_require(cp, "model", "checkpoint"))
    manifest = _require(cp, "evaluate", "manifest")
    split = _get(cp, "evaluate", "split", str, "test")
    dataset = load_dataset(read_manifest(manifest), Path(manifest).parent,
                           split, config.scale)
    domain = cli.domain or _get(cp, "evaluate", "domain", str, "auto")
    chosen = None
    if domain == "auto":
        # resolve the branch once, on the statistics of the whole dataset
        chosen = select_branch(model, _center_crop_all(dataset.images, config.crop_size))
        domain = chosen
    report = evaluate(model, dataset, domain, config)
    with open(out / "metrics.csv", "w", newline="") as fh:
        header = CSV_HEADER + (",chosen_branch" if chosen is not None else "")
        fh.write(header + "\n")
        cells = [manifest, domain, _fmt(report.srocc), _fmt(report.plcc),
                 _fmt(report.rmse)]
        cells += [_fmt(b) for b in report.betas]
        cells.append(str(report.n))
        if chosen is not None:
            cells.append(chosen)
        fh.write(",".join(cells) + "\n")
    return 0


def _read_histograms(path) -> list[RaterHistogram]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"histogram file not found: {path}")
    lines = p.read_text().splitlines()
    if not lines or not lines[0].startswith("count_1"):
        raise DataError(f"{path}: expected a histogram CSV with a count_1,... header")
    out = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(RaterHistogram(tuple(int(c) for c in line.split(","))))
        except ValueError as exc:
            raise DataError(f"{path}:{i}: bad histogram row ({exc})") from exc
    if not out:
        raise DataError(f"{path}: no histogram rows")
    return out


def _write_histograms(path, hists) -> None:
    c = len(hists[0].counts)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"count_{i + 1}" for i in range(c)) + "\n")
        for h in hists:
            fh.write(",".join(str(int(v)) for v in h.counts) + "\n")


def _sample_histograms(cp) -> list[RaterHistogram]:
    n = _get(cp, "gof", "n_histograms", int, 500)
    n_raters = _get(cp, "gof", "n_raters", int, 50)
    n_levels = _get(cp, "gof", "n_levels", int, 5)
    mu_lo = _get(cp, "gof", "mu_lo", float, 1.5)
    mu_hi = _get(cp, "gof", "mu_hi", float, 4.5)
    sigma_lo = _get(cp, "gof", "sigma_lo", float, 0.4)
    sigma_hi = _get(cp, "gof", "sigma_hi", float, 1.5)
    seed = _get(cp, "gof", "seed", int, 0)
    scale = RatingScale(1.0, float(n_levels), n_levels)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        mu = rng.uniform(mu_lo, mu_hi)
        sigma = rng.uniform(sigma_lo, sigma_hi)
        p = discretize(QualityLabel(mu, sigma * sigma), scale)
        out.append(RaterHistogram(tuple(int(c) for c in rng.multinomial(n_raters, p))))
    return out


GOF_FAMILIES = ("gaussian", "gamma", "weibull")


def cmd_gof(cli: CliConfig) -> int:
    cp = load_run_config(cli.config_path, cli.overrides)
    out = _out_dir(cli)
    if len(cli.seeds) > 1:
        raise ConfigError("gof does not fan out over seeds")
    if cli.seeds:
        if not cp.has_section("gof"):
            cp.add_section("gof")
        cp["gof"]["seed"] = str(cli.seeds[0])
    if cp.has_option("gof", "histograms"):
        hists = _read_histograms(cp.get("gof", "histograms"))
    else:
        hists = _sample_histograms(cp)
    _write_histograms(out / "histograms.csv", hists)

    c = len(hists[0].counts)
    levels = np.arange(1.0, c + 1.0)
    edges = np.arange(1.0, c + 1.0)  # bucket i covers sample mean [i, i+1)
    n_buckets = c - 1
    sums = {fam: np.zeros(n_buckets) for fam in GOF_FAMILIES}
    counts = np.zeros(n_buckets, dtype=int)
    for h in hists:
        mean = float(h.freqs() @ levels)
        bucket = min(int(np.searchsorted(edges, mean, side="right")) - 1, n_buckets - 1)
        bucket = max(bucket, 0)
        counts[bucket] += 1
        for fam in GOF_FAMILIES:
            sums[fam][bucket] += gof_fit(h, fam)[1]

    with open(out / "gof.csv", "w", newline="") as fh:
        cols = [f"mos_{i + 1}_{i + 2}" for i in range(n_buckets)]
        fh.write("family," + ",".join(cols) + ",weighted_avg\n")
        for fam in GOF_FAMILIES:
            cells = [fam]
            for b in range(n_buckets):
                cells.append(_fmt(sums[fam][b] / counts[b]) if counts[b] else "")
            cells.append(_fmt(sums[fam].sum() / counts.sum()))
            fh.write(",".join(cells) + "\n")
    return 0


def cmd_cluster(cli: CliConfig) -> int:
    cp = load_run_config(cli.config_path, cli.overrides)
    out = _out_dir(cli)
    hists = _read_histograms(_require(cp, "cluster", "histograms"))
    k = _get(cp, "cluster", "k", int, 5)
    if k < 1 or k > len(hists):
        raise ConfigError(f"cluster count k={k} must lie in [1, {len(hists)}]")
    seed = _single_seed(cli, cp, "cluster", 0)
    res = cluster_distributions(
        hists, k, n_restarts=_get(cp, "cluster", "n_restarts", int, 50), seed=seed
    )
    c = res.centroids.shape[1]
    with open(out / "clusters.csv", "w", newline="") as fh:
        fh.write("cluster,percentage," + ",".join(f"p_{i + 1}" for i in range(c)) + "\n")
        for j in range(k):
            cells = [str(j), _fmt(res.percentages[j])]
            cells += [_fmt(v) for v in res.centroids[j]]
            fh.write(",".join(cells) + "\n")
    return 0


# ------------------------------------------------------------------- dispatch


def run(cli: CliConfig) -> int:
    if cli.command == "train-source":
        return cmd_train_source(cli)
    if cli.command == "adapt":
        return cmd_adapt(cli, continual=False)
    if cli.command == "adapt-continual":
        return cmd_adapt(cli, continual=True)
    if cli.command == "evaluate":
        return cmd_evaluate(cli)
    if cli.command == "gof":
        return cmd_gof(cli)
    if cli.command == "cluster":
        return cmd_cluster(cli)
    raise ConfigError(f"unknown command {cli.command!r}")


def main(argv=None) -> int:
    cli = parse_args(argv if argv is not None else sys.argv[1:])
    try:
        return run(cli)
    except (ConfigError, MissingDomainError, DomainExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FitError, ShapeError, UninitializedStatisticsError,
            ValueError, ZeroDivisionError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except RadaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
