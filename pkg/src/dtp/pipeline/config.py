"""Flat ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Every key must be known; the
value type is taken from the built-in default for that key.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class FsdConfig:
    mu0: float = 0.35
    sigma0: float = 0.25


@dataclass
class SdrConfig:
    gamma_init: float = 1.0
    sigma_init: float = 0.3
    beta_init: float = 0.05
    stages: int = 4
    width: int = 16


@dataclass
class CsrConfig:
    width: int = 32
    spatial_kernel: int = 7
    reduction: int = 4
    scale: int = 2


@dataclass
class ModelConfig:
    use_fsd: bool = True
    use_sdr: bool = True
    use_csr: bool = True
    seed: int = 7


@dataclass
class TrainConfig:
    lr: float = 1e-3
    steps: int = 200
    batch: int = 16
    lambda_rec: float = 1.0
    lambda_kl: float = 0.01
    patch: int = 16
    seed: int = 11
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if not self.lambda_rec > 0:
            raise ConfigError(f"train.lambda_rec must be > 0, got {self.lambda_rec}")
        if self.lambda_kl < 0:
            raise ConfigError(f"train.lambda_kl must be >= 0, got {self.lambda_kl}")
        if self.lr < 0:
            raise ConfigError(f"train.lr must be >= 0, got {self.lr}")
        if self.steps < 0 or self.batch < 1 or self.patch < 2:
            raise ConfigError("train.steps >= 0, train.batch >= 1 and train.patch >= 2 required")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("train.beta1/beta2 must lie in [0, 1) and train.eps must be > 0")


@dataclass
class DataConfig:
    n_train: int = 64
    n_test: int = 16
    lr_size: int = 16
    ev: float = -2.5
    gamma: float = 1.2
    noise: float = 0.02
    seed: int = 3


@dataclass
class GradcheckConfig:
    patch: int = 8
    step: float = 1e-3
    tol: float = 1e-4
    max_entries: int = 64
    seed: int = 5
    kink_aware: bool = True
    min_step: float = 1e-7


@dataclass
class DtpConfig:
    fsd: FsdConfig = field(default_factory=FsdConfig)
    sdr: SdrConfig = field(default_factory=SdrConfig)
    csr: CsrConfig = field(default_factory=CsrConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)

    # -- flat view -------------------------------------------------------
    def keys(self) -> list[str]:
        return [f"{s.name}.{k.name}" for s in dataclasses.fields(self)
                for k in dataclasses.fields(getattr(self, s.name))]

    def get(self, key: str):
        section, name = self._locate(key)
        return getattr(section, name)

    def set(self, key: str, value) -> None:
        section, name = self._locate(key)
        current = getattr(section, name)
        setattr(section, name, _coerce(key, value, type(current)))

    def _locate(self, key: str):
        head, _, name = key.partition(".")
        section = getattr(self, head, None) if name else None
        if section is None or not dataclasses.is_dataclass(section) or \
                name not in {f.name for f in dataclasses.fields(section)}:
            raise ConfigError(f"unknown config key {key!r}")
        return section, name

    def validate(self) -> None:
        self.train.validate()
        if self.csr.scale not in (2, 4):
            raise ConfigError(f"csr.scale must be 2 or 4, got {self.csr.scale}")
        if self.sdr.stages < 1:
            raise ConfigError(f"sdr.stages must be >= 1, got {self.sdr.stages}")
        if self.fsd.sigma0 <= 0:
            raise ConfigError(f"fsd.sigma0 must be > 0, got {self.fsd.sigma0}")
        if self.data.ev > 0:
            raise ConfigError(f"data.ev must be <= 0 (darkening), got {self.data.ev}")
        if self.data.gamma < 1 or self.data.noise < 0:
            raise ConfigError("data.gamma must be >= 1 and data.noise >= 0")

    def copy(self) -> "DtpConfig":
        return DtpConfig.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {k: self.get(k) for k in self.keys()}

    @classmethod
    def from_dict(cls, values: dict) -> "DtpConfig":
        cfg = cls()
        for k, v in values.items():
            cfg.set(k, v)
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        lines, last = [], None
        for key in self.keys():
            section = key.split(".")[0]
            if last is not None and section != last:
                lines.append("")
            last = section
            lines.append(f"{key} = {_format(self.get(key))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "DtpConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                cfg.set(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "DtpConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, str(path))


def _coerce(key: str, value, kind: type):
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {kind.__name__})") from None
    return text


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)
