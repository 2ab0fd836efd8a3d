"""Acceptance suite: every release criterion at its stated tolerance.

Heavy artifacts (the 7-class x 20-clip corpus with both visual streams) are
built once per session and shared. Each test delegates to the corresponding
selftest criterion and prints its pass/fail line, so this module and the CLI
`selftest` command verify exactly the same things.
"""

from __future__ import annotations

import json

import pytest

from avcmd.selftest import (
    build_gesture_artifacts,
    criterion_audio,
    criterion_determinism,
    criterion_flow_oracle,
    criterion_fsm_replay,
    criterion_fusion_table,
    criterion_gesture_loo,
    criterion_kernel_gram,
    criterion_metrics_fixture,
    criterion_modalities,
    criterion_session,
    generator_calibration,
    pipeline_from_artifacts,
)

SEED = 42


@pytest.fixture(scope="session")
def artifacts():
    return build_gesture_artifacts(clips_per_class=20, seed=SEED, frames=24, size=96, k=64)


@pytest.fixture(scope="session")
def pipeline(artifacts):
    return pipeline_from_artifacts(artifacts)


def _check(result):
    print()
    print(result.line())
    assert result.passed, json.dumps(result.details, indent=2, default=str)


def test_generator_calibration():
    _check(generator_calibration(SEED))


def test_criterion_01_gesture_pipeline_loo(artifacts):
    # 6 command classes + background, 20 clips each, leave-one-clip-out,
    # combined channels >= 90% and never beaten by a single channel by more
    # than 2 points; the whole thing within the 5-minute budget.
    _check(criterion_gesture_loo(artifacts, min_comb=0.90, max_deficit=0.02, budget_s=300.0))


def test_criterion_02_rgb_vs_log_depth(artifacts):
    _check(criterion_modalities(artifacts, floor=0.85))


def test_criterion_03_kernel_gram(artifacts):
    _check(criterion_kernel_gram(artifacts, n=50))


def test_criterion_04_flow_oracle():
    _check(criterion_flow_oracle())


def test_criterion_05_fusion_truth_table():
    _check(criterion_fusion_table())


def test_criterion_06_fsm_replay():
    _check(criterion_fsm_replay())


def test_criterion_07_metrics_fixture():
    _check(criterion_metrics_fixture())


def test_criterion_08_audio(artifacts):
    _check(criterion_audio(SEED, tests_per_command=20, min_top1=0.95))


def test_criterion_09_selftest_determinism():
    _check(criterion_determinism(SEED))


def test_criterion_10_end_to_end_session(pipeline):
    _check(criterion_session(pipeline, SEED))
