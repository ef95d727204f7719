"""Experiment runner and command line interface.

Subcommands
-----------
generate   write a synthetic dataset (16-bit PGMs plus a JSON manifest)
train      train the segmenter with one loss configuration, write artifacts
compare    run several configs differing only in loss/optimizer, tabulate DSC
audit      run the gradient audits, write a JSON report (exit 1 on failure)
gradmap    export per-loss gradient maps for one sample of a saved checkpoint

Configuration is a UTF-8 JSON file::

    {
      "dataset": {"kind": "acdc_like", "image_size": [64, 64],
                  "train": 500, "val": 50, "test": 100,
                  "noise_sigma": 0.03, "seed": null},
      "loss": {"kind": "dice"},
      "optimizer": {"kind": "adam"},
      "epochs": 60, "batch_size": 1, "seed": 0,
      "augment": false, "output_dir": "runs/dice-adam"
    }

Loss kinds: "ce", "dice", "nm", "mime" (optional "a"/"b", default 1.9/0.1) and
"combined" with "terms": [["ce", 1.0], ["dice", 1.0], ...].  Optimizer fields
not given fall back to the reference values of ``default_optimizer_config``.
A null dataset seed is derived from the run seed.  The flags --loss, --opt,
--seed and --out override the corresponding config keys.

One run seed drives four independent streams (dataset, weight init, batch
shuffling, augmentation), so a fixed config reproduces every artifact byte for
byte.  SEGLAB_THREADS caps the number of worker threads used to evaluate the
samples of a batch; the gradient reduction order is fixed by sample index, so
results do not depend on the thread count.  Artifacts never embed absolute
paths.

Artifacts per training run: ``val_dsc.csv`` (header
``epoch,dsc_k1,...,dsc_kK,dsc_mean,lr``), ``test_metrics.json``, ``best.ckpt``
(best-validation parameters), and ``gradmap_<loss>_k<k>.pfm`` gradient maps of
the first validation sample at the best parameters.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, SegLabError, TrainingAbortError
from .gradcheck import (
    GradAuditReport,
    audit_bound,
    audit_two_valued,
    dynamic_range_db,
    export_gradient_map,
    finite_diff_grad,
    max_relative_error,
)
from .grid import ClassSet, GridShape, LabelMap, ProbabilityMap, one_hot_from_indices, overlap_stats
from .losses import LOSS_IDS, LossConfig, combined_loss, dice_grad
from .metrics import argmax_predict, dsc, evaluate_sample
from .net import SegNet, backward, forward, load_checkpoint, save_checkpoint, softmax, softmax_backward
from .optim import (
    AdamState,
    MomentumState,
    OptimizerConfig,
    SchedulerState,
    adam_step,
    default_optimizer_config,
    scheduler_step,
    sgd_step,
)
from .synthdata import DatasetSpec, Sample, augment, export_dataset, generate

__all__ = [
    "ExperimentConfig",
    "EpochRecord",
    "RunResult",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "run_experiment",
    "run_comparison",
    "run_audit",
    "run_gradmap",
    "main",
]

SCHEDULER_PATIENCE = 20
AUDIT_TERM_SETS = (
    (("dice", 1.0),),
    (("ce", 1.0),),
    (("mime", 1.0),),
    (("nm", 1.0),),
    (("ce", 1.0), ("dice", 1.0)),
)
AUDIT_TRIALS = 25
AUDIT_TOLERANCE = 1e-5

_OPT_FIELDS = ("eta", "lam", "momentum", "weight_decay", "beta1", "beta2", "adam_eps")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    loss_kind: str
    loss_terms: tuple[tuple[str, float], ...]
    mime_a: float
    mime_b: float
    optimizer: OptimizerConfig
    epochs: int
    batch_size: int
    seed: int
    augment: bool
    output_dir: Path | None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.loss_terms:
            raise ConfigError("loss configuration resolved to zero terms")
        for lid, _ in self.loss_terms:
            if lid not in LOSS_IDS:
                raise ConfigError(f"unknown loss id {lid!r}; expected one of {LOSS_IDS}")
        if any(lid == "nm" for lid, _ in self.loss_terms) and self.dataset.classes.count_objects < 2:
            raise ConfigError(
                "nm loss requires a multi-class dataset (K >= 2); on binary tasks it "
                "admits trivial all-foreground solutions"
            )
        if not (self.mime_a > 0 and self.mime_b > 0):
            raise ConfigError(f"mime weights must be positive, got a={self.mime_a}, b={self.mime_b}")

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_weights=self.loss_terms, mime_a=self.mime_a, mime_b=self.mime_b
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_dsc: tuple[float, ...]  # object classes 1..K
    val_dsc_mean: float
    lr: float


RunLog = list[EpochRecord]


@dataclass
class RunResult:
    config: ExperimentConfig
    log: RunLog
    best_epoch: int | None
    best_val_dsc: float | None
    test_metrics: dict
    output_dir: Path


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a validated ExperimentConfig from the JSON schema above."""
    ds = dict(data.get("dataset", {}))
    dataset = DatasetSpec(
        kind=ds.get("kind", "acdc_like"),
        image_size=tuple(ds.get("image_size", (64, 64))),
        train=int(ds.get("train", 500)),
        val=int(ds.get("val", 50)),
        test=int(ds.get("test", 100)),
        noise_sigma=float(ds.get("noise_sigma", 0.03)),
        seed=None if ds.get("seed") is None else int(ds["seed"]),
    )
    loss = data.get("loss", {"kind": "dice"})
    if isinstance(loss, str):
        loss = {"kind": loss}
    kind = loss.get("kind", "dice")
    mime_a = float(loss.get("a", 1.9))
    mime_b = float(loss.get("b", 0.1))
    if kind == "combined":
        raw_terms = loss.get("terms")
        if not raw_terms:
            raise ConfigError('combined loss needs a non-empty "terms" list')
        terms = tuple((str(t[0]), float(t[1])) for t in raw_terms)
    elif kind in LOSS_IDS:
        terms = ((kind, 1.0),)
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    opt = data.get("optimizer", {"kind": "adam"})
    if isinstance(opt, str):
        opt = {"kind": opt}
    optimizer = replace(
        default_optimizer_config(opt.get("kind", "adam")),
        **{k: float(opt[k]) for k in _OPT_FIELDS if k in opt},
    )
    out = data.get("output_dir")
    return ExperimentConfig(
        dataset=dataset,
        loss_kind=kind,
        loss_terms=terms,
        mime_a=mime_a,
        mime_b=mime_b,
        optimizer=optimizer,
        epochs=int(data.get("epochs", 60)),
        batch_size=int(data.get("batch_size", 1)),
        seed=int(data.get("seed", 0)),
        augment=bool(data.get("augment", False)),
        output_dir=Path(out) if out else None,
    )


def config_to_dict(cfg: ExperimentConfig, include_output: bool = True) -> dict:
    """Round-trip an ExperimentConfig to the JSON schema."""
    loss: dict = {"kind": cfg.loss_kind, "a": cfg.mime_a, "b": cfg.mime_b}
    if cfg.loss_kind == "combined":
        loss["terms"] = [[lid, lam] for lid, lam in cfg.loss_terms]
    data = {
        "dataset": {
            "kind": cfg.dataset.kind,
            "image_size": list(cfg.dataset.image_size),
            "train": cfg.dataset.train,
            "val": cfg.dataset.val,
            "test": cfg.dataset.test,
            "noise_sigma": cfg.dataset.noise_sigma,
            "seed": cfg.dataset.seed,
        },
        "loss": loss,
        "optimizer": {"kind": cfg.optimizer.kind, **{k: getattr(cfg.optimizer, k) for k in _OPT_FIELDS}},
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "augment": cfg.augment,
    }
    if include_output and cfg.output_dir is not None:
        data["output_dir"] = str(cfg.output_dir)
    return data


def load_config(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Streams:
    dataset_seed: int
    init_seed: int
    shuffle: np.random.Generator
    augment: np.random.Generator


def _derive_streams(seed: int) -> _Streams:
    children = np.random.SeedSequence(seed).spawn(4)
    return _Streams(
        dataset_seed=int(children[0].generate_state(1)[0]),
        init_seed=int(children[1].generate_state(1)[0]),
        shuffle=np.random.default_rng(children[2]),
        augment=np.random.default_rng(children[3]),
    )


def _resolved_dataset(cfg: ExperimentConfig, streams: _Streams) -> DatasetSpec:
    if cfg.dataset.seed is not None:
        return cfg.dataset
    return replace(cfg.dataset, seed=streams.dataset_seed)


def _thread_count() -> int:
    raw = os.environ.get("SEGLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"SEGLAB_THREADS must be an integer, got {raw!r}") from exc


def _sample_loss_grad(
    net: SegNet,
    sample: Sample,
    terms: tuple[tuple[str, float], ...],
    lcfg: LossConfig,
) -> tuple[float, np.ndarray]:
    logits, cache = forward(net, sample.image)
    probs = softmax(logits)
    value, grad_s = combined_loss(terms, sample.label, probs, lcfg)
    grad_z = softmax_backward(probs, grad_s)
    return value, backward(net, cache, grad_z)


def _batch_eval(
    net: SegNet,
    batch: list[Sample],
    terms: tuple[tuple[str, float], ...],
    lcfg: LossConfig,
    threads: int,
) -> list[tuple[float, np.ndarray]]:
    if threads <= 1 or len(batch) <= 1:
        return [_sample_loss_grad(net, sample, terms, lcfg) for sample in batch]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda smp: _sample_loss_grad(net, smp, terms, lcfg), batch))


def _validation_dsc(net: SegNet, samples: list[Sample]) -> np.ndarray:
    rows = []
    for sample in samples:
        logits, _ = forward(net, sample.image)
        pred = argmax_predict(softmax(logits))
        rows.append(dsc(sample.label, pred)[1:])
    return np.array(rows)


def _test_metrics(net: SegNet, samples: list[Sample], cfg: ExperimentConfig) -> dict:
    dsc_rows, clece_rows = [], []
    for sample in samples:
        logits, _ = forward(net, sample.image)
        report = evaluate_sample(sample.label, softmax(logits))
        dsc_rows.append(report.dsc[1:])
        clece_rows.append(report.clece[1:])
    dice = np.array(dsc_rows)
    calibration = np.array(clece_rows)
    return {
        "loss": cfg.loss_kind,
        "optimizer": cfg.optimizer.kind,
        "n_test": len(samples),
        "per_class_dsc_mean": [float(v) for v in dice.mean(axis=0)],
        "per_class_dsc_std": [float(v) for v in dice.std(axis=0)],
        "per_class_clece_mean": [float(v) for v in calibration.mean(axis=0)],
        "mean_dsc": float(dice.mean()),
        "mean_dsc_std": float(dice.mean(axis=1).std()),
        "mean_clece": float(calibration.mean()),
    }


def _write_curve_csv(path: Path, log: RunLog, count_objects: int) -> None:
    header = "epoch," + ",".join(f"dsc_k{k}" for k in range(1, count_objects + 1)) + ",dsc_mean,lr"
    lines = [header]
    for rec in log:
        cells = [str(rec.epoch)]
        cells += [repr(v) for v in rec.val_dsc]
        cells += [repr(rec.val_dsc_mean), repr(rec.lr)]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Train, validate, test, and write the run artifacts."""
    if cfg.output_dir is None:
        raise ConfigError("run_experiment needs an output_dir")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    streams = _derive_streams(cfg.seed)
    spec = _resolved_dataset(cfg, streams)
    train_set, val_set, test_set = generate(spec)

    net = SegNet(spec.classes, seed=streams.init_seed)
    lcfg = cfg.loss_config()
    threads = _thread_count()
    momentum_state = MomentumState.fresh(net.param_count)
    adam_state = AdamState.fresh(net.param_count)
    scheduler = SchedulerState(patience=SCHEDULER_PATIENCE, current_eta=cfg.optimizer.eta)
    adam_t = 0

    best_mean = float("-inf")
    best_params = net.get_params()
    best_epoch: int | None = None
    log: RunLog = []

    for epoch in range(cfg.epochs):
        lr = scheduler.current_eta
        order = streams.shuffle.permutation(len(train_set))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            if cfg.augment:
                batch = [augment(s, int(streams.augment.integers(0, 2**63))) for s in batch]
            results = _batch_eval(net, batch, cfg.loss_terms, lcfg, threads)
            batch_loss = float(np.mean([value for value, _ in results]))
            if not np.isfinite(batch_loss):
                raise TrainingAbortError(
                    f"non-finite training loss {batch_loss} at epoch {epoch}"
                )
            grad = np.mean([g for _, g in results], axis=0)
            step_cfg = replace(cfg.optimizer, eta=lr)
            theta = net.get_params()
            if cfg.optimizer.kind == "sgd":
                theta = sgd_step(theta, grad, step_cfg, momentum_state)
            else:
                adam_t += 1
                theta = adam_step(theta, grad, step_cfg, adam_state, adam_t)
            net.set_params(theta)
            batch_losses.append(batch_loss)

        val_matrix = _validation_dsc(net, val_set)
        per_class = val_matrix.mean(axis=0)
        mean_dsc = float(per_class.mean())
        log.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                val_dsc=tuple(float(v) for v in per_class),
                val_dsc_mean=mean_dsc,
                lr=lr,
            )
        )
        if mean_dsc > best_mean:
            best_mean = mean_dsc
            best_params = net.get_params()
            best_epoch = epoch
        scheduler = scheduler_step(scheduler, mean_dsc)

    net.set_params(best_params)
    test_report = _test_metrics(net, test_set, cfg)

    _write_curve_csv(out / "val_dsc.csv", log, spec.classes.count_objects)
    _write_json(out / "test_metrics.json", test_report)
    best_val = None if best_epoch is None else best_mean
    save_checkpoint(
        out / "best.ckpt",
        net,
        epoch=-1 if best_epoch is None else best_epoch,
        best_val_dsc=best_val,
        config=config_to_dict(cfg, include_output=False),
    )
    probe = val_set[0]
    logits, _ = forward(net, probe.image)
    probs = softmax(logits)
    _, grad_s = combined_loss(cfg.loss_terms, probe.label, probs, lcfg)
    export_gradient_map(grad_s, out / f"gradmap_{cfg.loss_kind}")

    return RunResult(
        config=cfg,
        log=log,
        best_epoch=best_epoch,
        best_val_dsc=best_val,
        test_metrics=test_report,
        output_dir=out,
    )


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------


def _require_comparable(cfgs: list[ExperimentConfig]) -> None:
    first = cfgs[0]
    for other in cfgs[1:]:
        same = (
            other.dataset == first.dataset
            and other.epochs == first.epochs
            and other.batch_size == first.batch_size
            and other.seed == first.seed
            and other.augment == first.augment
        )
        if not same:
            raise ConfigError("compared configs may differ only in loss/optimizer")


def _format_percent(mean: float, std: float) -> str:
    return f"{100 * mean:.1f} ({100 * std:04.1f})"


def run_comparison(cfgs: list[ExperimentConfig], out_dir: str | Path) -> tuple[Path, list[RunResult]]:
    """Run each config and tabulate per-class and mean test DSC."""
    if not cfgs:
        raise ConfigError("compare needs at least one config")
    _require_comparable(cfgs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for i, cfg in enumerate(cfgs):
        if cfg.output_dir is None:
            cfg = replace(cfg, output_dir=out / f"run{i}_{cfg.loss_kind}_{cfg.optimizer.kind}")
        results.append(run_experiment(cfg))

    count_objects = cfgs[0].dataset.classes.count_objects
    header = "loss,optimizer," + ",".join(f"dsc_k{k}" for k in range(1, count_objects + 1)) + ",dsc_mean"
    lines = [header]
    for res in results:
        tm = res.test_metrics
        cells = [tm["loss"], tm["optimizer"]]
        cells += [repr(v) for v in tm["per_class_dsc_mean"]]
        cells.append(repr(tm["mean_dsc"]))
        lines.append(",".join(cells))
    table = out / "comparison.csv"
    table.write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(f"{'loss':<10}{'optimizer':<11}" + "".join(f"{'k' + str(k):>14}" for k in range(1, count_objects + 1)) + f"{'mean':>14}")
    for res in results:
        tm = res.test_metrics
        row = f"{tm['loss']:<10}{tm['optimizer']:<11}"
        for m, s in zip(tm["per_class_dsc_mean"], tm["per_class_dsc_std"]):
            row += f"{_format_percent(m, s):>14}"
        row += f"{_format_percent(tm['mean_dsc'], tm['mean_dsc_std']):>14}"
        print(row)
    return table, results


# --------------------------------------------------------------------------
# audits
# --------------------------------------------------------------------------


def _random_audit_instance(rng: np.random.Generator) -> tuple[LabelMap, ProbabilityMap]:
    count_objects = int(rng.integers(1, 4))  # 2..4 planes including background
    pixels = int(rng.integers(4, 65))
    classes = ClassSet(count_objects)
    labels = one_hot_from_indices(rng.integers(0, classes.total, size=pixels), classes)
    probs = ProbabilityMap(
        GridShape((pixels,)),
        classes,
        rng.uniform(0.05, 0.95, size=(classes.total, pixels)),
    )
    return labels, probs


def run_audit(cfg: ExperimentConfig, report_path: str | Path) -> tuple[GradAuditReport, bool]:
    """Finite-difference, two-valuedness, bound and range audits.

    Relative error is taken over every loss in AUDIT_TERM_SETS on random
    instances; the dice-specific audits run on those instances and on the
    probabilities a freshly initialized net assigns to one dataset sample.
    """
    rng = np.random.default_rng(cfg.seed)
    lcfg = cfg.loss_config()
    max_err = 0.0
    violations = 0
    for terms in AUDIT_TERM_SETS:
        for _ in range(AUDIT_TRIALS):
            labels, probs = _random_audit_instance(rng)
            _, analytic = combined_loss(terms, labels, probs, lcfg)
            numeric = finite_diff_grad(
                lambda p: combined_loss(terms, labels, p, lcfg)[0], probs
            )
            max_err = max(max_err, max_relative_error(analytic, numeric))
            if terms == (("dice", 1.0),):
                violations += audit_bound(
                    dice_grad(labels, probs, lcfg),
                    overlap_stats(labels, probs),
                    1.0 / labels.classes.total,
                    epsilon=lcfg.epsilon,
                )

    streams = _derive_streams(cfg.seed)
    spec = replace(_resolved_dataset(cfg, streams), train=1, val=1, test=1)
    _, val_set, _ = generate(spec)
    sample = val_set[0]
    net = SegNet(spec.classes, seed=streams.init_seed)
    logits, _ = forward(net, sample.image)
    probs = softmax(logits)
    sample_grad = dice_grad(sample.label, probs, lcfg)
    distinct = audit_two_valued(sample_grad)
    violations += audit_bound(
        sample_grad, overlap_stats(sample.label, probs), 1.0 / spec.classes.total, epsilon=lcfg.epsilon
    )
    report = GradAuditReport(
        max_rel_error=max_err,
        distinct_values=tuple(distinct),
        bound_violations=violations,
        dynamic_range_db=dynamic_range_db(sample_grad),
    )
    report.write(report_path)
    passed = (
        max_err < AUDIT_TOLERANCE
        and violations == 0
        and all(c == 2 for c in distinct)
    )
    return report, passed


# --------------------------------------------------------------------------
# gradient maps from a checkpoint
# --------------------------------------------------------------------------


def run_gradmap(checkpoint: str | Path, sample_id: str, out_dir: str | Path) -> list[Path]:
    """Export one PFM per class for every loss at the checkpoint parameters."""
    net, header = load_checkpoint(checkpoint)
    if not header.get("config"):
        raise ConfigError(f"checkpoint {checkpoint} does not embed its experiment config")
    cfg = config_from_dict(header["config"])
    streams = _derive_streams(cfg.seed)
    spec = _resolved_dataset(cfg, streams)
    sample = None
    for split in generate(spec):
        for candidate in split:
            if candidate.id == sample_id:
                sample = candidate
                break
    if sample is None:
        raise ConfigError(f"sample id {sample_id!r} not found in the configured dataset")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    logits, _ = forward(net, sample.image)
    probs = softmax(logits)
    lcfg = cfg.loss_config()
    written: list[Path] = []
    for loss_id in LOSS_IDS:
        _, grad_s = combined_loss(((loss_id, 1.0),), sample.label, probs, lcfg)
        written.extend(export_gradient_map(grad_s, out / f"gradmap_{loss_id}"))
    return written


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--loss", choices=LOSS_IDS, help="override the configured loss")
    parser.add_argument("--opt", choices=("adam", "sgd"), help="override the optimizer")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", help="override the output directory")


def _config_with_overrides(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config(args.config) if args.config else {}
    if getattr(args, "loss", None):
        data["loss"] = {"kind": args.loss}
    if getattr(args, "opt", None):
        data["optimizer"] = {"kind": args.opt}
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    return config_from_dict(data)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segLab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a synthetic dataset to disk")
    p_gen.add_argument("--config", help="experiment config JSON")
    p_gen.add_argument("--seed", type=int, help="override the run seed")
    p_gen.add_argument("--out", required=True, help="dataset output directory")

    p_train = sub.add_parser("train", help="train one configuration")
    p_train.add_argument("--config", required=True, help="experiment config JSON")
    _add_override_flags(p_train)

    p_cmp = sub.add_parser("compare", help="run several configs and tabulate test DSC")
    p_cmp.add_argument("--configs", nargs="+", required=True, help="config JSON files")
    p_cmp.add_argument("--out", required=True, help="directory for comparison.csv and runs")

    p_audit = sub.add_parser("audit", help="run the gradient audits")
    p_audit.add_argument("--config", help="experiment config JSON")
    p_audit.add_argument("--seed", type=int, help="override the run seed")
    p_audit.add_argument("--out", default=".", help="directory for gradaudit.json")

    p_map = sub.add_parser("gradmap", help="export per-loss gradient maps for one sample")
    p_map.add_argument("--checkpoint", required=True, help="checkpoint file from a training run")
    p_map.add_argument("--sample", required=True, help="sample id, e.g. acdc_like-val-0000")
    p_map.add_argument("--out", required=True, help="output directory for the PFM files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            cfg = _config_with_overrides(args)
            spec = _resolved_dataset(cfg, _derive_streams(cfg.seed))
            train_set, val_set, test_set = generate(spec)
            manifest = export_dataset(train_set, val_set, test_set, spec, args.out)
            print(f"wrote dataset manifest {manifest}")
            return 0
        if args.command == "train":
            cfg = _config_with_overrides(args)
            result = run_experiment(cfg)
            tm = result.test_metrics
            print(
                f"loss={tm['loss']} optimizer={tm['optimizer']} "
                f"mean test DSC={tm['mean_dsc']:.4f} mean ClECE={tm['mean_clece']:.4f} "
                f"(artifacts in {result.output_dir})"
            )
            return 0
        if args.command == "compare":
            cfgs = [config_from_dict(load_config(p)) for p in args.configs]
            table, _ = run_comparison(cfgs, args.out)
            print(f"wrote {table}")
            return 0
        if args.command == "audit":
            cfg = _config_with_overrides(args)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            report, passed = run_audit(cfg, out / "gradaudit.json")
            print(
                f"max_rel_error={report.max_rel_error:.3g} "
                f"distinct={list(report.distinct_values)} "
                f"bound_violations={report.bound_violations} "
                f"dynamic_range_db={report.dynamic_range_db:.3f} "
                f"=> {'PASS' if passed else 'FAIL'}"
            )
            return 0 if passed else 1
        if args.command == "gradmap":
            written = run_gradmap(args.checkpoint, args.sample, args.out)
            print(f"wrote {len(written)} gradient maps to {args.out}")
            return 0
    except SegLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
