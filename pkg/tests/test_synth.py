from __future__ import annotations

import hashlib

import numpy as np
import pytest

from avcmd.audio import dtw_distance
from avcmd.detector import activity_score
from avcmd.errors import InvalidParameterError
from avcmd.flow import dense_flow
from avcmd.frames import Modality
from avcmd.mfcc import mfcc
from avcmd.synth import (
    GESTURE_CLASSES,
    GestureSpec,
    build_session_streams,
    default_spec,
    generate_command_audio,
    generate_corpus,
    generate_gesture_clip,
)
from avcmd.vocabulary import BACKGROUND_LABEL, Command, MotionPattern

from dataclasses import replace


def clip_digest(clip):
    h = hashlib.sha256()
    for f in clip.frames:
        h.update(f.data.tobytes())
    return h.hexdigest()


class TestGestureClips:
    def test_deterministic_bytes(self):
        spec = default_spec(MotionPattern.SWIPE_LEFT)
        a = generate_gesture_clip(spec, seed=11, frames=20)
        b = generate_gesture_clip(spec, seed=11, frames=20)
        assert clip_digest(a.rgb) == clip_digest(b.rgb)
        assert clip_digest(a.depth) == clip_digest(b.depth)

    def test_different_seeds_differ(self):
        spec = default_spec(MotionPattern.SWIPE_LEFT)
        a = generate_gesture_clip(spec, seed=11, frames=20)
        b = generate_gesture_clip(spec, seed=12, frames=20)
        assert clip_digest(a.rgb) != clip_digest(b.rgb)

    def test_modalities_and_labels(self):
        spec = default_spec(MotionPattern.SCRUB_OSCILLATE)
        s = generate_gesture_clip(spec, seed=3, frames=18)
        assert s.rgb.modality == Modality.RGB
        assert s.depth.modality == Modality.LOG_DEPTH
        assert s.label == int(Command.SCRUB_BACK)
        assert s.rgb.label == s.label

    def test_too_few_frames_rejected(self):
        with pytest.raises(InvalidParameterError):
            generate_gesture_clip(default_spec(MotionPattern.SWIPE_UP), seed=1, frames=10)

    def test_background_amplitude_rule(self):
        with pytest.raises(InvalidParameterError):
            GestureSpec(class_id=0, pattern=MotionPattern.SWIPE_UP, amplitude=0.0, period=10)
        GestureSpec(
            class_id=BACKGROUND_LABEL, pattern=MotionPattern.BACKGROUND, amplitude=1.0, period=10
        )

    def test_pattern_must_fit_frame(self):
        spec = replace(default_spec(MotionPattern.SWIPE_RIGHT), amplitude=300.0)
        with pytest.raises(InvalidParameterError):
            generate_gesture_clip(spec, seed=1, frames=18, size=96)

    def test_background_stays_below_activity_trigger(self):
        s = generate_gesture_clip(default_spec(MotionPattern.BACKGROUND), seed=5, frames=24)
        scores = [
            activity_score(s.rgb.frames[t - 1], s.rgb.frames[t], 12.0)
            for t in range(1, len(s.rgb.frames))
        ]
        assert max(scores) < 0.02

    def test_noise_free_swipe_flow_matches_kinematics(self):
        # generator ground truth: the limb moves amplitude/period px per frame
        spec = replace(default_spec(MotionPattern.SWIPE_RIGHT), noise_sigma=0.0)
        s = generate_gesture_clip(spec, seed=9, frames=20)
        speed = spec.amplitude / spec.period
        size = s.rgb.width
        field = dense_flow(s.rgb.frames[4], s.rgb.frames[5])
        cx = size / 2.0 + (4.5 / spec.period - 0.5) * spec.amplitude
        hw, hl = spec.limb_w // 2 - 2, spec.limb_len // 2 - 2
        u = field.u[size // 2 - hl : size // 2 + hl, int(cx - hw) : int(cx + hw)]
        v = field.v[size // 2 - hl : size // 2 + hl, int(cx - hw) : int(cx + hw)]
        assert abs(float(np.median(u)) - speed) <= 0.25
        assert abs(float(np.median(v))) <= 0.25

    def test_corpus_covers_all_classes(self):
        samples = generate_corpus(clips_per_class=2, seed=1, frames=18, size=96)
        labels = sorted({s.label for s in samples})
        assert labels == sorted({int(c) for c in Command} | {BACKGROUND_LABEL})
        assert len(samples) == 2 * len(GESTURE_CLASSES)

    def test_sixty_frame_clip_survives_container_byte_exact(self, tmp_path):
        from avcmd.container import read_clip, write_clip

        spec = default_spec(MotionPattern.CIRCLE_CW)
        sample = generate_gesture_clip(spec, seed=8, frames=60, size=64)
        p1, p2 = tmp_path / "a.igsc", tmp_path / "b.igsc"
        write_clip(p1, sample.rgb)
        write_clip(p2, read_clip(p1))
        assert hashlib.sha256(p1.read_bytes()).digest() == hashlib.sha256(p2.read_bytes()).digest()


class TestCommandAudio:
    def test_deterministic(self):
        a = generate_command_audio(2, speaker_seed=7, snr_db=20.0)
        b = generate_command_audio(2, speaker_seed=7, snr_db=20.0)
        assert np.array_equal(a, b)

    def test_clean_self_dtw_zero(self):
        wave = generate_command_audio(3, speaker_seed=1, snr_db=40.0)
        f = mfcc(wave, 16000)
        assert dtw_distance(f, f) == 0.0

    def test_unknown_command_rejected(self):
        with pytest.raises(InvalidParameterError):
            generate_command_audio(42, speaker_seed=0, snr_db=20.0)

    def test_snr_changes_wave(self):
        a = generate_command_audio(0, speaker_seed=1, snr_db=20.0)
        b = generate_command_audio(0, speaker_seed=1, snr_db=40.0)
        assert not np.array_equal(a, b)

    def test_pattern_separation_at_least_five_times_spread(self):
        canon = {c: mfcc(generate_command_audio(c, 0, 120.0), 16000) for c in range(6)}
        inter = min(
            dtw_distance(canon[a], canon[b]) for a in range(6) for b in range(a + 1, 6)
        )
        intra = []
        for c in range(6):
            feats = [mfcc(generate_command_audio(c, 1000 * c + i, 20.0), 16000) for i in range(4)]
            intra += [dtw_distance(feats[i], feats[j]) for i in range(4) for j in range(i + 1, 4)]
        assert inter / np.mean(intra) >= 5.0


class TestSessionStreams:
    def test_steps_align_with_script(self):
        from avcmd.session import LEGS_SCRIPT

        streams = build_session_streams(LEGS_SCRIPT, seed=3, window_frames=24, gap_frames=10)
        assert [s.step_id for s in streams.steps] == [sid for sid, _, _ in LEGS_SCRIPT]
        assert len(streams.audio_events) == len(LEGS_SCRIPT)
        for step, ev in zip(streams.steps, streams.audio_events):
            assert step.window[0] <= ev.start_frame < ev.end_frame <= step.window[1]
        assert len(streams.video.frames) == 10 + len(LEGS_SCRIPT) * (24 + 10)

    def test_deterministic(self):
        from avcmd.session import BACK_SCRIPT

        a = build_session_streams(BACK_SCRIPT, seed=5)
        b = build_session_streams(BACK_SCRIPT, seed=5)
        assert clip_digest(a.video) == clip_digest(b.video)
        for ea, eb in zip(a.audio_events, b.audio_events):
            assert np.array_equal(ea.features.frames, eb.features.frames)
