"""Seeded synthetic annotation data with controllable ambiguity.

Each example picks a dominant class uniformly at random.  With probability
``ambiguity_mix`` a second, different class is drawn and the mode of its
label distribution sits halfway between the two; otherwise the mode is the
dominant class.  The latent label distribution is

    eta ~ Dirichlet(concentration * mode + floor)

features are the eta-weighted blend of class prototypes plus Gaussian
noise, and each of the M annotators draws one label from Categorical(eta).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .annotations import AnnotationSet, Dataset, Example, save_dataset

__all__ = ["GenConfig", "GeneratedData", "generate", "write_generated"]


@dataclass(frozen=True)
class GenConfig:
    num_classes: int = 4
    feature_dim: int = 16
    num_examples: int = 4000
    noise_sigma: float = 0.6
    annotators: tuple[int, int] = (3, 9)
    ambiguity_mix: float = 0.3
    concentration: float = 20.0
    floor: float = 0.05
    prototypes: tuple[tuple[float, ...], ...] | None = None
    prototype_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        ann = self.annotators
        if isinstance(ann, int):
            ann = (ann, ann)
        object.__setattr__(self, "annotators", tuple(int(a) for a in ann))
        if self.prototypes is not None:
            object.__setattr__(self, "prototypes", tuple(tuple(map(float, p)) for p in self.prototypes))
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_examples < 1:
            raise ValueError(f"num_examples must be >= 1, got {self.num_examples}")
        lo, hi = self.annotators
        if len(self.annotators) != 2 or lo < 1 or hi < lo:
            raise ValueError(f"annotators must be M or [M_lo, M_hi] with 1 <= M_lo <= M_hi")
        if not 0.0 <= self.ambiguity_mix <= 1.0:
            raise ValueError("ambiguity_mix must lie in [0, 1]")
        if not self.concentration > 0 or not self.floor > 0:
            raise ValueError("concentration and floor must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.prototypes is not None:
            shape = np.shape(self.prototypes)
            if shape != (self.num_classes, self.feature_dim):
                raise ValueError(
                    f"prototypes must have shape {(self.num_classes, self.feature_dim)}, got {shape}"
                )

    @classmethod
    def from_dict(cls, obj: dict) -> "GenConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown generator options: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["annotators"] = list(self.annotators)
        if self.prototypes is not None:
            d["prototypes"] = [list(p) for p in self.prototypes]
        return d


@dataclass(frozen=True, eq=False)
class GeneratedData:
    dataset: Dataset
    eta: np.ndarray
    prototypes: np.ndarray = field(repr=False)

    def eta_by_id(self) -> dict[str, np.ndarray]:
        return dict(zip(self.dataset.ids, self.eta))


def generate(cfg: GenConfig) -> GeneratedData:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    k, dim, n = cfg.num_classes, cfg.feature_dim, cfg.num_examples
    if cfg.prototypes is None:
        protos = cfg.prototype_scale * rng.standard_normal((k, dim))
    else:
        protos = np.asarray(cfg.prototypes, dtype=np.float64)

    dominant = rng.integers(k, size=n)
    mixed = rng.random(n) < cfg.ambiguity_mix
    # second class uniform over the k - 1 others
    second = (dominant + 1 + rng.integers(k - 1, size=n)) % k
    mode = np.zeros((n, k))
    mode[np.arange(n), dominant] = 1.0
    mode[mixed, dominant[mixed]] = 0.5
    mode[mixed, second[mixed]] = 0.5
    eta = np.stack([rng.dirichlet(cfg.concentration * m + cfg.floor) for m in mode])

    feats = eta @ protos + cfg.noise_sigma * rng.standard_normal((n, dim))
    lo, hi = cfg.annotators
    m_counts = rng.integers(lo, hi + 1, size=n)

    width = len(str(n - 1))
    examples = []
    for i in range(n):
        labels = rng.choice(k, size=m_counts[i], p=eta[i])
        examples.append(
            Example(f"syn{i:0{width}d}", feats[i], AnnotationSet(tuple(labels), k))
        )
    names = tuple(f"class{j}" for j in range(k))
    return GeneratedData(Dataset(tuple(examples), k, dim, names), eta, protos)


def write_generated(data: GeneratedData, out_dir, name: str = "dataset") -> tuple[Path, Path]:
    """Write ``<name>.jsonl`` and the ground-truth sidecar ``<name>.eta.jsonl``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / f"{name}.jsonl"
    eta_path = out / f"{name}.eta.jsonl"
    save_dataset(data.dataset, data_path)
    with open(eta_path, "w", encoding="utf-8") as fh:
        for ident, row in zip(data.dataset.ids, data.eta):
            fh.write(json.dumps({"id": ident, "eta": [float(v) for v in row]}) + "\n")
    return data_path, eta_path
