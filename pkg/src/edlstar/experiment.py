"""Experiment configuration, data protocol and per-method train/evaluate.

Protocol:
    * the dataset is partitioned into MA and NMA examples;
    * MA examples are split 70/15/15 into train/val/test (seeded);
    * a seeded 25% of NMA examples forms the NMA test split;
    * every method trains on MA train only, except ``MLE_PLUS`` which also
      trains on the remaining 75% of NMA examples relabelled as class K.

Evaluation mirrors the result tables: classification and calibration on MA
test, NMA detection against all NMA and against the NMA test split
(``MLE_PLUS``: test split only), and per-annotation NLL on MA test and NMA.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics as M
from .annotations import (
    AnnotationSet,
    Dataset,
    Example,
    load_dataset,
    relabel_with_extra_class,
    select_nma_test,
    split_ma_nma,
)
from .datagen import GenConfig, generate
from .dirichlet import DirichletPrediction, entropy
from .losses import LossKind, LossSpec
from .network import (
    EVIDENCE_ACTIVATIONS,
    Model,
    ModelConfig,
    TrainConfig,
    ensemble_predict,
    load_models,
    mc_dropout_predict,
    save_model,
    train,
    train_ensemble,
)

__all__ = [
    "Method",
    "ConfigError",
    "ExperimentConfig",
    "Splits",
    "make_splits",
    "prepare_splits",
    "TrainedMethod",
    "train_method",
    "predict",
    "evaluate",
    "run_once",
    "run_experiment",
    "CONFIG_SCHEMA_VERSION",
]

CONFIG_SCHEMA_VERSION = 1


class Method(str, enum.Enum):
    MLE = "MLE"
    MLE_PLUS = "MLE_PLUS"
    MLE_STAR = "MLE_STAR"
    MCDP = "MCDP"
    ENSEMBLE = "ENSEMBLE"
    EDL = "EDL"
    EDL_STAR_R1 = "EDL_STAR_R1"
    EDL_STAR_R2 = "EDL_STAR_R2"

    @property
    def loss_kind(self) -> LossKind:
        return _LOSS_OF[self]

    @property
    def is_evidential(self) -> bool:
        return self.loss_kind.is_evidential


_LOSS_OF = {
    Method.MLE: LossKind.CE_MAJORITY,
    Method.MLE_PLUS: LossKind.CE_MAJORITY_PLUS,
    Method.MLE_STAR: LossKind.KL_SOFT_LABEL,
    Method.MCDP: LossKind.CE_MAJORITY,
    Method.ENSEMBLE: LossKind.CE_MAJORITY,
    Method.EDL: LossKind.EDL,
    Method.EDL_STAR_R1: LossKind.EDL_STAR_R1,
    Method.EDL_STAR_R2: LossKind.EDL_STAR_R2,
}


class ConfigError(ValueError):
    pass


def _pick(obj: dict, section: str, allowed: set) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"'{section}' must be an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    return dict(obj)


@dataclass(frozen=True)
class DataConfig:
    generator: GenConfig | None = None
    path: str | None = None
    train: str | None = None
    val: str | None = None
    test: str | None = None
    split_seed: int = 0

    def __post_init__(self):
        sources = [self.generator is not None, self.path is not None, self.train is not None]
        if sum(sources) != 1:
            raise ConfigError("data needs exactly one of 'generator', 'path' or 'train'/'test'")
        if self.train is not None and self.test is None:
            raise ConfigError("data.train requires data.test")


@dataclass(frozen=True)
class EvalConfig:
    bins: int = 10
    thresholds: tuple[float, ...] = tuple(np.round(np.linspace(0.0, 1.0, 101), 10))
    mc_passes: int = 100
    ensemble_members: int = 10

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if self.bins < 1:
            raise ConfigError("eval.bins must be >= 1")
        if list(self.thresholds) != sorted(self.thresholds) or not self.thresholds:
            raise ConfigError("eval.thresholds must be a non-empty ascending list")
        if self.mc_passes < 1:
            raise ConfigError("eval.mc_passes must be >= 1")
        if self.ensemble_members < 2:
            raise ConfigError("eval.ensemble_members must be >= 2")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to train and evaluate one method.

    The JSON form groups fields into sections: ``model`` holds
    ``hidden_dims``, ``output_activation``, ``dropout_rate`` and
    ``evidence_bias``; ``train`` holds the :class:`TrainConfig` fields other
    than ``loss`` plus ``lambda`` and ``anneal_steps``.  Unset activation and
    dropout resolve per method (``relu_evidence`` for the evidential family,
    ``softmax`` otherwise; dropout 0.5 for ``MCDP``).
    """

    method: Method
    data: DataConfig
    hidden_dims: tuple[int, ...] = (256,)
    output_activation: str | None = None
    dropout_rate: float | None = None
    evidence_bias: float = 1.0
    batch_size: int = 64
    epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    balanced_sampling: bool = False
    lam: float = 0.2
    anneal_steps: int | None = None
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Method(self.method))
        except ValueError:
            raise ConfigError(
                f"unknown method {self.method!r}; expected one of {[m.value for m in Method]}"
            ) from None
        if self.output_activation is None:
            act = "relu_evidence" if self.method.is_evidential else "softmax"
            object.__setattr__(self, "output_activation", act)
        if self.dropout_rate is None:
            object.__setattr__(self, "dropout_rate", 0.5 if self.method is Method.MCDP else 0.0)
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        evidential_head = self.output_activation in EVIDENCE_ACTIVATIONS
        if self.method.is_evidential and not evidential_head:
            raise ConfigError(
                f"{self.method.value} needs an evidence activation "
                f"{EVIDENCE_ACTIVATIONS}, got {self.output_activation!r}"
            )
        if not self.method.is_evidential and self.output_activation != "softmax":
            raise ConfigError(
                f"{self.method.value} needs a softmax output, got {self.output_activation!r}"
            )
        if self.method is Method.MCDP and not self.dropout_rate > 0:
            raise ConfigError("MCDP needs dropout_rate > 0")
        try:
            self.loss_spec
            self.train_config(0)
            ModelConfig(1, 1, self.hidden_dims, self.output_activation, self.dropout_rate,
                        evidence_bias=self.evidence_bias)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def loss_spec(self) -> LossSpec:
        return LossSpec(self.method.loss_kind, self.lam, self.anneal_steps)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            loss=self.loss_spec,
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            balanced_sampling=self.balanced_sampling,
            seed=seed,
        )

    def model_config(self, input_dim: int, num_outputs: int, seed: int) -> ModelConfig:
        return ModelConfig(
            input_dim=input_dim,
            num_outputs=num_outputs,
            hidden_dims=self.hidden_dims,
            output_activation=self.output_activation,
            dropout_rate=self.dropout_rate,
            seed=seed,
            evidence_bias=self.evidence_bias,
        )

    # -- JSON -----------------------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        top = _pick(
            doc, "config",
            {"schema_version", "method", "data", "model", "train", "eval", "seed", "output_dir"},
        )
        version = top.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        if "method" not in top:
            raise ConfigError("config needs a 'method'")

        data = _pick(top.pop("data", None), "data",
                     {"generator", "path", "train", "val", "test", "split_seed"})
        if "generator" in data:
            try:
                data["generator"] = GenConfig.from_dict(data["generator"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"data.generator: {exc}") from None
        for key in ("path", "train", "val", "test"):
            if data.get(key) is not None and base_dir is not None:
                data[key] = str(Path(base_dir) / data[key])
        model = _pick(top.pop("model", None), "model",
                      {"hidden_dims", "output_activation", "dropout_rate", "evidence_bias"})
        tr = _pick(top.pop("train", None), "train",
                   {"batch_size", "epochs", "learning_rate", "optimizer",
                    "balanced_sampling", "lambda", "anneal_steps"})
        if "lambda" in tr:
            tr["lam"] = tr.pop("lambda")
        ev = _pick(top.pop("eval", None), "eval",
                   {"bins", "thresholds", "mc_passes", "ensemble_members"})
        try:
            return cls(
                data=DataConfig(**data),
                eval=EvalConfig(**ev),
                **model,
                **tr,
                **top,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        data = {k: v for k, v in asdict(self.data).items() if v is not None}
        if self.data.generator is not None:
            data["generator"] = self.data.generator.to_dict()
        ev = asdict(self.eval)
        ev["thresholds"] = list(self.eval.thresholds)
        doc = {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "method": self.method.value,
            "data": data,
            "model": {
                "hidden_dims": list(self.hidden_dims),
                "output_activation": self.output_activation,
                "dropout_rate": self.dropout_rate,
                "evidence_bias": self.evidence_bias,
            },
            "train": {
                "batch_size": self.batch_size,
                "epochs": self.epochs,
                "learning_rate": self.learning_rate,
                "optimizer": self.optimizer,
                "balanced_sampling": self.balanced_sampling,
                "lambda": self.lam,
                "anneal_steps": self.anneal_steps,
            },
            "eval": ev,
            "seed": self.seed,
        }
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc


# -- data protocol ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Splits:
    ma_train: Dataset
    ma_val: Dataset
    ma_test: Dataset
    nma_train: Dataset
    nma_test: Dataset

    @property
    def nma_all(self) -> Dataset:
        return self.nma_train.subset(self.nma_train.examples + self.nma_test.examples)

    def sizes(self) -> dict:
        return {
            "ma_train": len(self.ma_train),
            "ma_val": len(self.ma_val),
            "ma_test": len(self.ma_test),
            "nma_train": len(self.nma_train),
            "nma_test": len(self.nma_test),
        }


def make_splits(d: Dataset, split_seed: int, ratios=(0.70, 0.15, 0.15)) -> Splits:
    """MA 70/15/15 train/val/test and a 25% NMA test split, both seeded."""
    ma, nma = split_ma_nma(d)
    n = len(ma)
    perm = np.random.default_rng([split_seed, 0]).permutation(n)
    n_train = int(math.floor(ratios[0] * n + 0.5))
    n_val = int(math.floor(ratios[1] * n + 0.5))
    idx_train = np.sort(perm[:n_train])
    idx_val = np.sort(perm[n_train : n_train + n_val])
    idx_test = np.sort(perm[n_train + n_val :])
    held = select_nma_test(len(nma), split_seed)
    pick = lambda ds, idx: ds.subset(ds.examples[i] for i in idx)  # noqa: E731
    return Splits(
        ma_train=pick(ma, idx_train),
        ma_val=pick(ma, idx_val),
        ma_test=pick(ma, idx_test),
        nma_train=nma.subset(ex for ex, h in zip(nma, held) if not h),
        nma_test=nma.subset(ex for ex, h in zip(nma, held) if h),
    )


def prepare_splits(data: DataConfig) -> Splits:
    if data.generator is not None:
        return make_splits(generate(data.generator).dataset, data.split_seed)
    if data.path is not None:
        return make_splits(load_dataset(data.path), data.split_seed)
    train_ds = load_dataset(data.train)
    test_ds = load_dataset(data.test)
    ma_tr, nma_tr = split_ma_nma(train_ds)
    ma_te, nma_te = split_ma_nma(test_ds)
    if data.val is not None:
        ma_va, nma_va = split_ma_nma(load_dataset(data.val))
        nma_te = nma_te.subset(nma_va.examples + nma_te.examples)
    else:
        ma_va = ma_tr.subset(())
    for ds in (test_ds, ma_va):
        if ds.feature_dim != train_ds.feature_dim or ds.num_classes != train_ds.num_classes:
            raise ConfigError("train/val/test files disagree on num_classes or feature_dim")
    return Splits(ma_tr, ma_va, ma_te, nma_tr, nma_te)


def _single_label(ds: Dataset, num_classes: int, label_of) -> Dataset:
    return Dataset(
        tuple(Example(ex.id, ex.features, AnnotationSet((label_of(ex),), num_classes)) for ex in ds),
        num_classes,
        ds.feature_dim,
    )


def mle_plus_training_sets(splits: Splits, split_seed: int) -> tuple[Dataset, Dataset]:
    """(train, val) with NMA as extra class ``K``; NMA test examples are left out."""
    k = splits.ma_train.num_classes
    pool = splits.ma_train.subset(splits.ma_train.examples + splits.nma_all.examples)
    train_ds, nma_test = relabel_with_extra_class(pool, split_seed)
    if [ex.id for ex in nma_test] != splits.nma_test.ids:
        # explicit-file protocol: NMA test comes from the test file instead
        train_ds = _single_label(
            pool.subset(splits.ma_train.examples + splits.nma_train.examples),
            k + 1,
            lambda ex: k if ex.majority.is_nma else ex.majority.label,
        )
    val_ds = _single_label(splits.ma_val, k + 1, lambda ex: ex.majority.label)
    return train_ds, val_ds


# -- training / prediction ----------------------------------------------------


@dataclass(eq=False)
class TrainedMethod:
    method: Method
    models: list[Model]
    trace: list[dict] = field(default_factory=list)


def train_method(cfg: ExperimentConfig, splits: Splits, seed: int | None = None) -> TrainedMethod:
    seed = cfg.seed if seed is None else seed
    method = cfg.method
    k = splits.ma_train.num_classes
    dim = splits.ma_train.feature_dim
    tc = cfg.train_config(seed)

    if method is Method.MLE_PLUS:
        if len(splits.nma_train) == 0:
            raise ConfigError(
                "MLE_PLUS trains NMA as an extra class and needs NMA training examples; "
                "the dataset has none"
            )
        train_ds, val_ds = mle_plus_training_sets(splits, cfg.data.split_seed)
        n_out = k + 1
    else:
        train_ds, val_ds, n_out = splits.ma_train, splits.ma_val, k
    if len(train_ds) == 0:
        raise ConfigError("no training examples after applying the data protocol")

    mcfg = cfg.model_config(dim, n_out, seed)
    if method is Method.ENSEMBLE:
        models = train_ensemble(mcfg, train_ds, tc, members=cfg.eval.ensemble_members)
        return TrainedMethod(method, models, [])
    result = train(Model(mcfg), train_ds, tc, val=val_ds if len(val_ds) else None)
    trace = [
        {"epoch": i + 1, "train_loss": tl, "val_loss": result.val_loss[i] if result.val_loss else None}
        for i, tl in enumerate(result.train_loss)
    ]
    return TrainedMethod(method, [result.model], trace)


@dataclass(frozen=True, eq=False)
class Predictions:
    probs: np.ndarray
    confidence: np.ndarray
    uncertainty: np.ndarray
    alpha: np.ndarray | None = None


def predict(tm: TrainedMethod, x: np.ndarray, cfg: ExperimentConfig, seed: int) -> Predictions:
    """Class probabilities, confidence and uncertainty for a feature batch.

    Evidential models report ``u = K / alpha0``; the softmax family reports
    ``1 - max probability``.
    """
    if x.shape[0] == 0:
        k = tm.models[0].config.num_outputs
        empty = np.zeros(0)
        return Predictions(np.zeros((0, k)), empty, empty)
    if tm.method.is_evidential:
        pred = DirichletPrediction(tm.models[0].forward(x))
        probs = pred.expected_probs()
        conf = probs.max(axis=1)
        return Predictions(probs, conf, np.asarray(pred.uncertainty()), pred.alpha)
    if tm.method is Method.MCDP:
        probs, _ = mc_dropout_predict(tm.models[0], x, cfg.eval.mc_passes,
                                      rng=np.random.default_rng([seed, 1]))
    elif tm.method is Method.ENSEMBLE:
        probs = ensemble_predict(tm.models, x)
    else:
        probs = tm.models[0].predict_proba(x)
    conf = probs.max(axis=1)
    return Predictions(probs, conf, 1.0 - conf)


def _class_probs(probs: np.ndarray, k: int) -> np.ndarray:
    # extra-class models: renormalise over the K emotion classes for NLL
    if probs.shape[1] == k:
        return probs
    p = probs[:, :k]
    return p / p.sum(axis=1, keepdims=True)


def evaluate(tm: TrainedMethod, splits: Splits, cfg: ExperimentConfig, seed: int) -> M.MetricsReport:
    k = splits.ma_test.num_classes
    is_plus = tm.method is Method.MLE_PLUS
    test = splits.ma_test
    if len(test) == 0:
        raise ConfigError("MA test split is empty")
    nma_eval = splits.nma_test if is_plus else splits.nma_all

    p_ma = predict(tm, test.features, cfg, seed)
    p_nma_all = predict(tm, splits.nma_all.features, cfg, seed)
    p_nma_test = predict(tm, splits.nma_test.features, cfg, seed)
    p_nma_eval = p_nma_test if is_plus else p_nma_all

    labels = test.majority_labels
    pred_labels = M.argmax_lowest(p_ma.probs)
    correct = (pred_labels == labels).astype(np.float64)
    n_out = p_ma.probs.shape[1]
    uar = M.uar(p_ma.probs, labels, k)

    scalars: dict = {
        "acc": M.accuracy(p_ma.probs, labels),
        "uar": uar.value,
        "ece": M.ece(p_ma.confidence, correct, cfg.eval.bins),
        "mce": M.mce(p_ma.confidence, correct, cfg.eval.bins),
    }

    def detect(p_nma: Predictions):
        if p_nma.uncertainty.size == 0:
            return None, None
        scores = np.r_[p_ma.uncertainty, p_nma.uncertainty]
        positive = np.r_[np.zeros(len(p_ma.uncertainty), bool), np.ones(len(p_nma.uncertainty), bool)]
        return M.auroc(scores, positive), M.auprc(scores, positive)

    scalars["auroc_all"], scalars["auprc_all"] = (None, None) if is_plus else detect(p_nma_all)
    scalars["auroc_test"], scalars["auprc_test"] = detect(p_nma_test)

    nll_ma_each = M.per_example_nll(_class_probs(p_ma.probs, k), test.counts)
    scalars["nll_ma"] = float(nll_ma_each.mean())
    if len(nma_eval):
        nll_nma_each = M.per_example_nll(_class_probs(p_nma_eval.probs, k), nma_eval.counts)
        scalars["nll_nma"] = float(nll_nma_each.mean())
    else:
        nll_nma_each = np.zeros(0)
        scalars["nll_nma"] = None

    pool_u = np.r_[p_ma.uncertainty, p_nma_eval.uncertainty]
    pool_h = np.r_[entropy(p_ma.probs), entropy(p_nma_eval.probs)] if len(nma_eval) else entropy(p_ma.probs)
    scalars["mean_uncertainty"] = float(pool_u.mean())
    scalars["mean_uncertainty_ma"] = float(p_ma.uncertainty.mean())
    scalars["mean_uncertainty_nma"] = (
        float(p_nma_eval.uncertainty.mean()) if len(nma_eval) else None
    )
    scalars["mean_entropy"] = float(np.mean(pool_h))

    ts = cfg.eval.thresholds
    curves = {
        "reject_accuracy": M.reject_curve(p_ma.uncertainty, correct, ts).as_rows(),
        "reject_nll_ma": M.reject_curve(p_ma.uncertainty, nll_ma_each, ts).as_rows(),
    }
    if len(nma_eval):
        curves["reject_nll_nma"] = M.reject_curve(p_nma_eval.uncertainty, nll_nma_each, ts).as_rows()
    for name, vals in (("ecdf_uncertainty", pool_u), ("ecdf_entropy", pool_h)):
        xs, ys = M.ecdf(vals)
        curves[name] = [{"x": float(a), "y": float(b)} for a, b in zip(xs, ys)]
    lo, hi, count, acc, conf = M.calibration_bins(p_ma.confidence, correct, cfg.eval.bins)
    curves["calibration_bins"] = [
        {"lower": a, "upper": b, "count": int(c), "accuracy": d, "confidence": e}
        for a, b, c, d, e in zip(lo, hi, count, acc, conf)
    ]

    confusion = M.confusion_matrix(labels, pred_labels, n_out)
    meta = {
        "method": tm.method.value,
        "seed": seed,
        "split_seed": cfg.data.split_seed,
        "sizes": splits.sizes(),
        "num_classes": k,
        "argmax_tie_rule": "lowest class index",
        "uar_absent_classes": list(uar.absent_classes),
        "nma_detection_sets": ["test"] if is_plus else ["all", "test"],
        "nll_convention": "per-annotation, multinomial coefficient dropped",
        "output_activation": cfg.output_activation,
        "lambda": cfg.lam if tm.method.is_evidential else None,
    }
    report = M.MetricsReport(scalars, curves, confusion.tolist(), meta)
    return report


# -- orchestration ------------------------------------------------------------


def _write_trace(path: Path, trace: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"], lineterminator="\n")
        w.writeheader()
        for row in trace:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                        for k, v in row.items()})


def save_trained(tm: TrainedMethod, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = tm.models[0] if len(tm.models) == 1 and tm.method is not Method.ENSEMBLE else tm.models
    save_model(out / "model.json", model, method=tm.method.value)
    _write_trace(out / "trace.csv", tm.trace)


def load_trained(path) -> TrainedMethod:
    models, method = load_models(path)
    if method is None:
        raise ConfigError(f"model file {path} carries no method tag")
    return TrainedMethod(Method(method), models)


def run_once(cfg: ExperimentConfig, seed: int, splits: Splits | None = None, out_dir=None):
    """Train and evaluate one seed; optionally write model, trace and report."""
    splits = prepare_splits(cfg.data) if splits is None else splits
    tm = train_method(cfg, splits, seed)
    report = evaluate(tm, splits, cfg, seed)
    if out_dir is not None:
        save_trained(tm, out_dir)
        report.write(out_dir)
    return tm, report


def seed_list(cfg: ExperimentConfig, n_seeds: int) -> list[int]:
    return [cfg.seed + i for i in range(n_seeds)]


def aggregate(reports: list[M.MetricsReport], seeds: list[int]) -> M.MetricsReport:
    """Mean of every scalar over seeds, with per-seed values kept in ``meta``."""
    keys = list(reports[0].scalars)
    mean = {}
    for key in keys:
        vals = [r.scalars.get(key) for r in reports]
        mean[key] = None if any(v is None for v in vals) else float(np.mean(vals))
    meta = dict(reports[0].meta)
    meta["seed"] = None
    meta["seeds"] = seeds
    meta["per_seed"] = [dict(r.scalars, seed=s) for r, s in zip(reports, seeds)]
    return M.MetricsReport(mean, {}, [], meta)


def run_experiment(cfg: ExperimentConfig, n_seeds: int = 1, out_dir=None, splits: Splits | None = None):
    """Run ``n_seeds`` seeds on a fixed split.

    Seeds are ``cfg.seed, cfg.seed + 1, ...``; they drive initialisation,
    batching and dropout, while the data split stays fixed.

    Returns:
        ``(aggregate_report, per_seed_reports)``.  With one seed the
        aggregate is that seed's report.
    """
    splits = prepare_splits(cfg.data) if splits is None else splits
    seeds = seed_list(cfg, n_seeds)
    reports = []
    for s in seeds:
        sub = None
        if out_dir is not None:
            sub = Path(out_dir) if n_seeds == 1 else Path(out_dir) / f"seed{s}"
        reports.append(run_once(cfg, s, splits, sub)[1])
    if n_seeds == 1:
        return reports[0], reports
    agg = aggregate(reports, seeds)
    if out_dir is not None:
        agg.write(out_dir)
    return agg, reports


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)
