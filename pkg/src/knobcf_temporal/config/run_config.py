"""
Run configuration for KnobCF commands.

Field names mirror the JSON config file verbatim. Relative paths resolve
against the config file's directory and must exist when the file is loaded.
"""

import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field, PrivateAttr, model_validator

from ..tuning.base import short_hash
from ..tuning.errors import ConfigError
from ..tuning.models import TuningParams

# Temporal frontend; override with TEMPORAL_ADDRESS
TEMPORAL_ADDRESS = os.environ.get("TEMPORAL_ADDRESS", "localhost:7233")


class BackendConfig(BaseModel):
    """Exactly one of a simulator spec file or an external command."""
    simulator: Optional[Path] = None
    command: Optional[list[str]] = None
    time_scale: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def _one_backend(self) -> "BackendConfig":
        if (self.simulator is None) == (self.command is None):
            raise ValueError("backend needs exactly one of 'simulator' or 'command'")
        if self.command is not None and not self.command:
            raise ValueError("backend command is empty")
        return self


class RunConfig(BaseModel):
    knob_space: Path
    workload: Path
    backend: BackendConfig
    tuner: Literal["bo", "random"] = "bo"
    n: int = Field(default=16, ge=1, le=64)
    init_count: int = Field(default=20, ge=1)
    iterations: int = Field(default=100, ge=0)
    seed: int = 0
    m_min: int = Field(default=2, ge=1)
    tau: float = Field(default=0.2, gt=0.0, le=1.0)
    finetune_iterations: int = Field(default=30, ge=0)
    candidate_count: int = Field(default=1000, ge=1)
    p90_repeats: int = Field(default=10, ge=2)
    pretrain_evaluations: int = Field(default=300, ge=20)
    task_id: str = "task"
    output_dir: Path = Path("runs")
    # Prior tune run directory whose executions replace fresh pretraining evaluations
    history: Optional[Path] = None
    _base: Optional[Path] = PrivateAttr(default=None)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """Parse ``path`` and resolve its relative paths.

        Raises:
            pydantic.ValidationError: malformed fields.
            ConfigError: a referenced file does not exist.
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        config = cls.model_validate_json(path.read_text())
        return config.resolved(path.parent)

    def resolved(self, base: Path) -> "RunConfig":
        def anchor(p: Path) -> Path:
            return p if p.is_absolute() else (base / p).resolve()

        backend = self.backend
        if backend.simulator is not None:
            backend = backend.model_copy(update={"simulator": anchor(backend.simulator)})
        config = self.model_copy(
            update={
                "knob_space": anchor(self.knob_space),
                "workload": anchor(self.workload),
                "backend": backend,
                "output_dir": anchor(self.output_dir),
                "history": anchor(self.history) if self.history is not None else None,
            }
        )
        config.check_files()
        config._base = base.resolve()
        return config

    def check_files(self) -> None:
        required = [self.knob_space, self.workload]
        if self.backend.simulator is not None:
            required.append(self.backend.simulator)
        missing = [str(p) for p in required if not p.is_file()]
        if self.history is not None and not self.history.is_dir():
            missing.append(str(self.history))
        if missing:
            raise ConfigError(f"referenced files do not exist: {missing}")

    @property
    def config_hash(self) -> str:
        """Hash of every field, with paths taken relative to the config file's directory."""
        payload = self.model_dump(mode="json")
        if self._base is not None:
            for key in ("knob_space", "workload", "output_dir", "history"):
                payload[key] = self._relative(payload[key])
            payload["backend"]["simulator"] = self._relative(payload["backend"]["simulator"])
        return short_hash(payload)

    def _relative(self, path: Optional[str]) -> Optional[str]:
        if path is None or self._base is None:
            return path
        return Path(os.path.relpath(path, self._base)).as_posix()

    def tuning_params(self) -> TuningParams:
        return TuningParams(
            iterations=self.iterations,
            init_count=self.init_count,
            seed=self.seed,
            n=self.n,
            m_min=self.m_min,
            finetune_iterations=self.finetune_iterations,
            candidate_count=self.candidate_count,
            p90_repeats=self.p90_repeats,
            task_id=self.task_id,
        )
