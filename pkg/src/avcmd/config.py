"""Pipeline configuration: one flat key-value namespace for every tunable.

Values load from a plain-text file of `key = value` lines with `#` comments.
Unknown keys and out-of-range values are rejected. Tracking constants follow
the dense-trajectory literature's published defaults; the online thresholds
are tuned on the synthetic suite; both kinds are ordinary config here, so a
deployment can pin its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .session import SessionParams
from .trajectories import TrackerParams


@dataclass
class PipelineConfig:
    # trajectory extraction (standard dense-trajectory settings)
    traj_len: int = 15
    grid_step: int = 5
    quality: float = 0.001
    sigma_min: float = math.sqrt(3.0)
    pyramid_levels: int = 3
    # encoding
    codebook_k: int = 4000
    codebook_seed: int = 0
    descriptor_subsample: int = 100_000
    # classification
    svm_c: float = 100.0
    # online activity detection (tuned on the synthetic suite)
    tau_noise: float = 12.0
    theta_on: float = 0.02
    theta_off: float = 0.01
    min_dur_s: float = 0.4
    max_gap_s: float = 0.5
    # audio and fusion
    keyword_threshold: float = 0.5
    speech_fallback: bool = True
    snr_db: float = 20.0
    # misc
    seed: int = 42
    jobs: int = 1
    lang: str = "en"

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.traj_len >= 3, "traj_len must be >= 3"),
            (self.traj_len % 3 == 0, "traj_len must be divisible by 3 (temporal cells)"),
            (self.grid_step >= 1, "grid_step must be >= 1"),
            (0.0 < self.quality <= 1.0, "quality must be in (0, 1]"),
            (self.sigma_min > 0.0, "sigma_min must be positive"),
            (self.pyramid_levels >= 1, "pyramid_levels must be >= 1"),
            (self.codebook_k >= 1, "codebook_k must be >= 1"),
            (self.descriptor_subsample >= 1, "descriptor_subsample must be >= 1"),
            (self.svm_c > 0.0, "svm_c must be positive"),
            (self.tau_noise >= 0.0, "tau_noise must be nonnegative"),
            (0.0 <= self.theta_off <= self.theta_on <= 1.0, "need 0 <= theta_off <= theta_on <= 1"),
            (self.min_dur_s > 0.0, "min_dur_s must be positive"),
            (self.max_gap_s > 0.0, "max_gap_s must be positive"),
            (self.jobs >= 1, "jobs must be >= 1"),
            (self.lang in ("en", "de", "it"), "lang must be one of en, de, it"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def tracker_params(self) -> TrackerParams:
        return TrackerParams(
            traj_len=self.traj_len,
            grid_step=self.grid_step,
            quality=self.quality,
            sigma_min=self.sigma_min,
            pyramid_levels=self.pyramid_levels,
        )

    def session_params(self, fps: float) -> SessionParams:
        return SessionParams(
            tau_noise=self.tau_noise,
            theta_on=self.theta_on,
            theta_off=self.theta_off,
            min_dur_frames=max(1, int(round(self.min_dur_s * fps))),
            max_gap_frames=max(1, int(round(self.max_gap_s * fps))),
            keyword_threshold=self.keyword_threshold,
            speech_fallback=self.speech_fallback,
            lang=self.lang,
        )


def _parse_value(name: str, text: str, kind: type):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def load_config(path: str | Path) -> PipelineConfig:
    known = {f.name: f.type for f in fields(PipelineConfig)}
    types = {"int": int, "float": float, "bool": bool, "str": str}
    cfg = PipelineConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            name, _, value = line.partition("=")
            name = name.strip()
            if name not in known:
                raise ConfigError(f"line {lineno}: unknown key {name!r}")
            kind = types.get(known[name], str) if isinstance(known[name], str) else known[name]
            setattr(cfg, name, _parse_value(name, value, kind))
    return cfg.validate()


def write_config(path: str | Path, cfg: PipelineConfig) -> None:
    lines = ["# pipeline configuration", ""]
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
