"""Run configuration for badm-dance.

Values are resolved in this order, later sources winning: dataclass defaults,
a JSON config file, ``BADM_<FIELD>`` environment variables (a local ``.env`` is
honoured) and finally explicit command-line flags.
"""

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from dotenv import load_dotenv

from .denoiser import DenoiserConfig
from .errors import BadProbability, BadT, ConfigError, FileFormatError
from .losses import LossWeights
from .optim import AdanHyper

ENV_PREFIX = "BADM_"
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    """Every tunable of the pipeline, flat."""

    # denoiser
    num_slices: int = 6
    hidden_dim: int = 128
    heads: int = 4
    decoder_layers: int = 2
    conv_layers: int = 2
    kernel_size: int = 5
    feature_dim: int = 35
    bidirectional: bool = True
    use_beat: bool = True
    use_local_decoder: bool = True
    # diffusion
    schedule: str = "cosine"
    T: int = 1000
    guidance: float = 2.0
    ddim_steps: int = 50
    # losses
    lambda_pos: float = 1.0
    lambda_vel: float = 1.0
    lambda_foot: float = 0.5
    # optimizer
    optimizer: str = "adan"
    lr: float = 2e-4
    beta1: float = 0.98
    beta2: float = 0.92
    beta3: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.02
    # training
    dropout: float = 0.1
    epochs: int = 200
    batch_size: int = 16
    checkpoint_every: int = 10
    # data
    seed: int = 0
    fps: int = 30
    n_frames: int = 150

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<dict>") -> "RunConfig":
        unknown = set(raw) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"Unknown config keys in {source}: {sorted(unknown)}")
        defaults = cls()
        values = {
            name: _coerce(name, value, getattr(defaults, name))
            for name, value in raw.items()
        }
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None):
        """Resolve defaults < JSON file < environment < overrides, then validate."""
        load_dotenv()
        values: dict = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except json.JSONDecodeError as e:
                raise FileFormatError(f"Config {path} is not valid JSON: {e}")
            if not isinstance(raw, dict):
                raise FileFormatError(f"Config {path} must be a JSON object")
            cls.from_dict(raw, source=str(path))
            values.update(raw)
        for name in cls.field_names():
            env_value = os.getenv(ENV_PREFIX + name.upper())
            if env_value is not None:
                values[name] = env_value
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(values, source="merged configuration").validate()

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "RunConfig":
        self.denoiser_config().validate(self.n_frames)
        if self.T < 1:
            raise BadT(f"T must be >= 1, got {self.T}")
        if not 1 <= self.ddim_steps <= self.T:
            raise ConfigError(f"ddim_steps must be in [1, T={self.T}]")
        if not 0.0 <= self.dropout <= 1.0:
            raise BadProbability(f"dropout must be in [0, 1], got {self.dropout}")
        if self.schedule not in ("cosine", "linear"):
            raise ConfigError(f"Unknown schedule {self.schedule!r}")
        if min(self.epochs, self.batch_size, self.checkpoint_every, self.fps) < 1:
            raise ConfigError(
                "epochs, batch_size, checkpoint_every and fps must be >= 1"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        self.loss_weights()
        self.adan_hyper()
        return self

    def denoiser_config(self) -> DenoiserConfig:
        return DenoiserConfig(
            num_slices=self.num_slices,
            hidden_dim=self.hidden_dim,
            heads=self.heads,
            decoder_layers=self.decoder_layers,
            conv_layers=self.conv_layers,
            kernel_size=self.kernel_size,
            feature_dim=self.feature_dim,
            bidirectional=self.bidirectional,
            use_beat=self.use_beat,
            use_local_decoder=self.use_local_decoder,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_pos, self.lambda_vel, self.lambda_foot)

    def adan_hyper(self) -> AdanHyper:
        return AdanHyper(
            lr=self.lr,
            betas=(self.beta1, self.beta2, self.beta3),
            eps=self.eps,
            weight_decay=self.weight_decay,
            mode=self.optimizer,
        )


def _coerce(name: str, value, default):
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(
            f"Config value for {name} must be {type(default).__name__}, got {value!r}"
        )
