"""Experiment configuration: one JSON file describing mesh, material,
latent box, training, datasets, and dynamics settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .energy import Attachment, build_energy_model
from .errors import ConfigError
from .mesh import (
    MaterialParams,
    Mesh,
    load_tet_mesh,
    load_tri_mesh,
    make_rect_sheet,
    mesh_from_dict,
    mesh_to_dict,
)
from .subspace import TrainConfig

DEFAULT_HALF_WIDTH = 0.625


@dataclass(frozen=True)
class DatasetSpec:
    """One oracle dataset: a latent grid or a random batch.

    A random spec may carry contiguous split sizes ({"train": 900, ...});
    the generator then produces one draw of `count` samples and slices it
    in order.
    """

    kind: str  # "grid" or "random"
    resolution: int = 9
    count: int = 0
    seed: int = 0
    splits: tuple = ()  # ordered (name, size) pairs

    def __post_init__(self):
        if self.kind not in ("grid", "random"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "grid" and self.resolution < 2:
            raise ConfigError("grid resolution must be at least 2")
        if self.kind == "random" and self.count < 1:
            raise ConfigError("random dataset needs a positive count")
        if self.splits:
            if self.kind != "random":
                raise ConfigError("splits only apply to random datasets")
            total = sum(size for _, size in self.splits)
            if total != self.count:
                raise ConfigError(
                    f"split sizes sum to {total}, dataset has {self.count}"
                )

    def to_dict(self) -> dict:
        if self.kind == "grid":
            return {"kind": "grid", "resolution": self.resolution}
        out = {"kind": "random", "count": self.count, "seed": self.seed}
        if self.splits:
            out["splits"] = [[name, size] for name, size in self.splits]
        return out

    @staticmethod
    def from_dict(d: dict) -> "DatasetSpec":
        return DatasetSpec(
            kind=d["kind"],
            resolution=int(d.get("resolution", 9)),
            count=int(d.get("count", 0)),
            seed=int(d.get("seed", 0)),
            splits=tuple(
                (str(name), int(size)) for name, size in d.get("splits", [])
            ),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one subspace experiment."""

    mesh_source: dict = field(
        default_factory=lambda: {"generator": "rect_sheet", "nx": 10, "ny": 10}
    )
    material: MaterialParams = field(default_factory=MaterialParams)
    attachments: tuple = ()
    num_modes: int = 3
    half_width: float = DEFAULT_HALF_WIDTH
    hidden: tuple = (64, 64, 64, 64, 64)
    train: TrainConfig = field(default_factory=TrainConfig)
    datasets: dict = field(
        default_factory=lambda: {
            "train": DatasetSpec("grid", resolution=9),
            "val": DatasetSpec("grid", resolution=7),
            "test": DatasetSpec("grid", resolution=11),
        }
    )
    timestep: float = 0.04
    output_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        if self.num_modes < 1:
            raise ConfigError("num_modes must be positive")
        if self.half_width <= 0:
            raise ConfigError("half_width must be positive")
        if self.timestep <= 0:
            raise ConfigError("timestep must be positive")

    def build_mesh(self) -> Mesh:
        src = dict(self.mesh_source)
        gen = src.pop("generator", None)
        if gen == "rect_sheet":
            return make_rect_sheet(**src)
        if gen == "obj":
            return load_tri_mesh(src["path"])
        if gen == "tetgen":
            return load_tet_mesh(src["node"], src["ele"])
        if gen == "inline":
            return mesh_from_dict(src["mesh"])
        raise ConfigError(f"unknown mesh generator {gen!r}")

    def build_energy_model(self, mesh: Mesh | None = None):
        mesh = mesh if mesh is not None else self.build_mesh()
        return build_energy_model(
            mesh, self.material, attachments=list(self.attachments)
        )

    def to_dict(self) -> dict:
        return {
            "mesh_source": self.mesh_source,
            "material": self.material.to_dict(),
            "attachments": [a.to_dict() for a in self.attachments],
            "num_modes": self.num_modes,
            "half_width": self.half_width,
            "hidden": list(self.hidden),
            "train": self.train.to_dict(),
            "datasets": {k: v.to_dict() for k, v in self.datasets.items()},
            "timestep": self.timestep,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        try:
            return ExperimentConfig(
                mesh_source=d.get("mesh_source", {"generator": "rect_sheet"}),
                material=MaterialParams.from_dict(d.get("material", {})),
                attachments=tuple(
                    Attachment.from_dict(a) for a in d.get("attachments", [])
                ),
                num_modes=int(d.get("num_modes", 3)),
                half_width=float(d.get("half_width", DEFAULT_HALF_WIDTH)),
                hidden=tuple(int(w) for w in d.get("hidden", (64,) * 5)),
                train=TrainConfig.from_dict(d.get("train", {})),
                datasets={
                    k: DatasetSpec.from_dict(v)
                    for k, v in d.get("datasets", {}).items()
                },
                timestep=float(d.get("timestep", 0.04)),
                output_dir=str(d.get("output_dir", "runs/default")),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @staticmethod
    def load(path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return ExperimentConfig.from_dict(data)

    def with_train(self, **kwargs) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, **kwargs))


def default_sheet_config(**overrides) -> ExperimentConfig:
    """The reference setup: a square cloth sheet with three latent modes."""
    cfg = ExperimentConfig(**overrides) if overrides else ExperimentConfig()
    return cfg


def inline_mesh_source(mesh: Mesh) -> dict:
    """Embed a mesh directly in a config (small meshes, tests)."""
    return {"generator": "inline", "mesh": mesh_to_dict(mesh)}
