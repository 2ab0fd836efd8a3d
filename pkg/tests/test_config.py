from __future__ import annotations

import math

import pytest

from avcmd.config import PipelineConfig, load_config, write_config
from avcmd.errors import ConfigError


def test_defaults_validate():
    cfg = PipelineConfig().validate()
    assert cfg.traj_len == 15
    assert cfg.codebook_k == 4000
    assert cfg.svm_c == 100.0
    assert cfg.theta_on == 0.02 and cfg.theta_off == 0.01
    assert math.isclose(cfg.sigma_min, math.sqrt(3.0))


def test_round_trip(tmp_path):
    cfg = PipelineConfig(codebook_k=64, svm_c=10.0, speech_fallback=False, lang="de")
    path = tmp_path / "cfg.txt"
    write_config(path, cfg)
    back = load_config(path)
    assert back == cfg


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# comment\n\ncodebook_k = 32  # inline\nsvm_c = 5.0\n")
    cfg = load_config(path)
    assert cfg.codebook_k == 32
    assert cfg.svm_c == 5.0


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("mystery_knob = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("codebook_k = lots\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_equals_rejected(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("codebook_k 32\n")
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize(
    "key,value",
    [
        ("theta_on", "0.005"),  # below theta_off default
        ("traj_len", "14"),     # not divisible by temporal cells
        ("quality", "0"),
        ("svm_c", "-1"),
        ("lang", "fr"),
        ("jobs", "0"),
    ],
)
def test_range_violations(tmp_path, key, value):
    path = tmp_path / "cfg.txt"
    path.write_text(f"{key} = {value}\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bool_parsing(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("speech_fallback = off\n")
    assert load_config(path).speech_fallback is False
    path.write_text("speech_fallback = maybe\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_session_params_conversion():
    cfg = PipelineConfig().validate()
    sp = cfg.session_params(fps=15.0)
    assert sp.min_dur_frames == 6   # 0.4 s at 15 fps
    assert sp.max_gap_frames == 8   # 0.5 s rounded
    tp = cfg.tracker_params()
    assert tp.traj_len == cfg.traj_len
