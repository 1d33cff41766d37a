"""``key=value`` run configuration files.

One file can set encoder, LoRA and training fields; LoRA keys carry a
``lora_`` prefix. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .encoder import EncoderConfig
from .errors import UsageError
from .lora import LoraConfig, parse_targets
from .trainer import TrainConfig

_LORA_KEYS = {"lora_r": "r", "lora_alpha": "alpha", "lora_dropout": "dropout", "lora_targets": "targets"}


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    lora: LoraConfig = field(default_factory=LoraConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "lora": self.lora.to_dict(),
                "train": self.train.to_dict()}


# desk-scale preset for the built-in cipher corpus: tiny encoder, a larger
# step size than the full-scale default and batches of 16
SYNTHETIC = RunConfig(EncoderConfig(), LoraConfig(), TrainConfig(lr=1e-2, batch_size=16))


def _coerce(raw: str, typ):
    if typ in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    enc_types = {f.name: f.type for f in fields(EncoderConfig)}
    train_types = {f.name: f.type for f in fields(TrainConfig)}
    enc, lora, train = base.encoder.to_dict(), base.lora.to_dict(), base.train.to_dict()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _LORA_KEYS:
                name = _LORA_KEYS[key]
                lora[name] = sorted(parse_targets(value)) if name == "targets" else \
                    _coerce(value, int if name == "r" else float)
            elif key in enc_types:
                enc[key] = _coerce(value, enc_types[key])
            elif key in train_types:
                train[key] = _coerce(value, train_types[key])
            else:
                raise UsageError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise UsageError(f"config line {lineno}: {exc}") from None
    try:
        return RunConfig(EncoderConfig.from_dict(enc), LoraConfig.from_dict(lora), TrainConfig.from_dict(train))
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def load_config(path: str | Path | None, base: RunConfig | None = None) -> RunConfig:
    if path is None:
        return base or RunConfig()
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{k}={v}" for k, v in cfg.encoder.to_dict().items()]
    lo = cfg.lora.to_dict()
    lines += [f"lora_r={lo['r']}", f"lora_alpha={lo['alpha']}", f"lora_dropout={lo['dropout']}",
              f"lora_targets={','.join(lo['targets'])}"]
    lines += [f"{k}={v}" for k, v in cfg.train.to_dict().items()]
    return "\n".join(lines) + "\n"
