"""Experiment configuration, stored as JSON next to every run's outputs."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .channel import SceneConfig
from .exceptions import InvalidConfigError
from .metrics import DEFAULT_K
from .nn import SgdConfig
from .siamese import REGIMES, LossConfig

OUTPUT_DIR_ENV = "SIAMLOC_OUTPUT_DIR"
METHODS = ("siamese", "fcnn", "sammon")
MODES = ("uniform", "t_intersection")


@dataclass
class SammonConfig:
    iters: int = 500
    learning_rate: float = 0.3
    momentum: float = 0.5


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    mode: str = "uniform"
    sigma: float = 1.0  # feature scaling exponent
    n_train: int = 2000
    n_test: int = 400  # half uniform, half on the square ring
    n_train_traces: int = 20
    n_test_traces: int = 20
    trace_speed: float = 10.0
    trace_dt: float = 0.5
    regime: str = "supervised"
    method: str = "siamese"
    anchor_fraction: float = 1.0
    # train on the anchored subset only (the 10%-label ablation)
    anchored_only: bool = False
    loss: LossConfig = field(default_factory=lambda: LossConfig("supervised"))
    sgd: SgdConfig = field(
        default_factory=lambda: SgdConfig(
            learning_rate=1e-5, l2_lambda=1e-2, batch_size=100, epochs=300, final_learning_rate=3e-7
        )
    )
    sammon: SammonConfig = field(default_factory=SammonConfig)
    k_values: tuple = DEFAULT_K
    output_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        self.k_values = tuple(int(k) for k in self.k_values)
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}")
        if self.regime not in REGIMES:
            raise InvalidConfigError(f"regime must be one of {REGIMES}")
        if self.method not in METHODS:
            raise InvalidConfigError(f"method must be one of {METHODS}")
        if self.loss.regime != self.regime:
            raise InvalidConfigError(f"loss regime {self.loss.regime!r} differs from run regime {self.regime!r}")
        if self.method == "sammon" and self.regime != "unsupervised":
            raise InvalidConfigError("Sammon mapping is an unsupervised method")
        if self.method == "fcnn" and self.regime != "supervised":
            raise InvalidConfigError("the FCNN is a supervised method")
        if not 0.0 <= self.anchor_fraction <= 1.0:
            raise InvalidConfigError("anchor_fraction must lie in [0, 1]")
        if self.regime == "semisupervised" and not 0.0 < self.anchor_fraction < 1.0:
            raise InvalidConfigError("semisupervised runs need 0 < anchor_fraction < 1")
        if self.n_train < 2 or self.n_test < 8 or self.n_test % 2:
            raise InvalidConfigError("n_train >= 2 and an even n_test >= 8 are required")
        if self.n_train_traces < 1 or self.n_test_traces < 1:
            raise InvalidConfigError("need at least one trace per split")

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scene"] = self.scene.to_dict()
        d["k_values"] = list(self.k_values)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "scene" in d:
            scene = dict(d["scene"])
            for key in ("bs_position", "area"):
                if key in scene:
                    scene[key] = tuple(scene[key])
            d["scene"] = SceneConfig(**scene)
        if "loss" in d:
            d["loss"] = LossConfig(**d["loss"])
        if "sgd" in d:
            d["sgd"] = SgdConfig(**d["sgd"])
        if "sammon" in d:
            d["sammon"] = SammonConfig(**d["sammon"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def with_regime(self, regime: str, **changes) -> "ExperimentConfig":
        """Copy with a new regime and a loss config resolved for it."""
        loss = LossConfig(regime, self.loss.epsilon)
        return replace(self, regime=regime, loss=loss, **changes)

    def resolved_output_dir(self) -> Path:
        """``output_dir``, re-rooted under $SIAMLOC_OUTPUT_DIR when it is set."""
        root = os.environ.get(OUTPUT_DIR_ENV)
        out = Path(self.output_dir)
        if root and not out.is_absolute():
            return Path(root) / out
        if root:
            return Path(root) / out.name
        return out


def unsupervised(cfg: ExperimentConfig) -> ExperimentConfig:
    """Channel-charting variant of ``cfg``.

    sigma=2 leaves a feature norm proportional to the distance from the BS,
    which gives the chart a radial cue. Those features are ~1e4 times larger
    than at sigma=1 and the relu net is positively homogeneous, so the step
    sizes shrink by the same factor.
    """
    sgd = replace(cfg.sgd, learning_rate=8e-8, final_learning_rate=8e-10)
    return cfg.with_regime("unsupervised", anchor_fraction=0.0, sigma=2.0, sgd=sgd)


def preset(name: str) -> ExperimentConfig:
    """Named starting points for the standard experiments."""
    base = ExperimentConfig()
    if name == "supervised":
        return base
    if name == "semisupervised":
        return base.with_regime("semisupervised", anchor_fraction=0.1)
    if name == "unsupervised":
        return unsupervised(base)
    if name == "t_intersection":
        return replace(base, mode="t_intersection")
    raise InvalidConfigError(f"unknown preset {name!r}")
