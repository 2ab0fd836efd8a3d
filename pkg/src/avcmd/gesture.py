"""End-to-end gesture classification pipeline.

Wires the stages together: dense-trajectory extraction, per-channel BoVW
encoding against trained codebooks, chi-square distances with per-channel
mean normalizers, and a one-against-all kernel SVM on the resulting Gram
matrix. The trained bundle carries everything prediction needs, including
codebook content hashes so mismatched artifacts are refused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import (
    CHANNEL_ORDER,
    BovwHist,
    Channel,
    Codebook,
    channel_mean_distance,
    chi2_cross_matrix,
    chi2_distance_matrix,
    cross_gram,
    multichannel_gram,
    train_codebook,
)
from .errors import InvalidParameterError, PipelineMismatchError
from .frames import Clip
from .svm import DEFAULT_C, KernelSvmModel, Prediction, train_kernel_svm
from .trajectories import TrackerParams, track
from .vocabulary import BACKGROUND_LABEL

_CHANNEL_ATTR = {
    Channel.TRAJ: "traj",
    Channel.HOG: "hog",
    Channel.HOF: "hof",
    Channel.MBH: "mbh",
}

_CHANNEL_DIM = {Channel.TRAJ: 30, Channel.HOG: 96, Channel.HOF: 108, Channel.MBH: 192}


def extract_channel_descriptors(
    clip: Clip, params: TrackerParams = TrackerParams()
) -> dict[Channel, np.ndarray]:
    """Per-channel descriptor matrices for one clip (possibly 0-row)."""
    result = track(clip, params)
    out = {}
    for ch, attr in _CHANNEL_ATTR.items():
        if result.trajectories:
            out[ch] = np.stack([getattr(t, attr) for t in result.trajectories])
        else:
            out[ch] = np.empty((0, _CHANNEL_DIM[ch]))
    return out


@dataclass
class GesturePipeline:
    codebooks: dict[Channel, Codebook]
    model: KernelSvmModel
    tracker: TrackerParams = field(default_factory=TrackerParams)

    def __post_init__(self):
        self._train_l1 = {
            ch: _l1_rows(h) for ch, h in (self.model.train_hists or {}).items()
        }
        for ch, cb in self.codebooks.items():
            want = self.model.codebook_hashes.get(ch)
            if want is not None and want != cb.content_hash():
                raise PipelineMismatchError(
                    f"codebook for {ch.name} does not match the model's vocabulary"
                )

    def encode_clip(self, clip: Clip) -> dict[Channel, BovwHist]:
        from .encoding import bovw_encode

        descs = extract_channel_descriptors(clip, self.tracker)
        return {ch: bovw_encode(descs[ch], cb) for ch, cb in self.codebooks.items()}

    def kernel_rows(self, hists: dict[Channel, BovwHist]) -> np.ndarray:
        dists = {}
        for ch, train_l1 in self._train_l1.items():
            if ch not in hists:
                raise InvalidParameterError(f"missing channel {ch.name}")
            test_l1 = hists[ch].l1_normalized()[None, :]
            dists[ch] = chi2_cross_matrix(test_l1, train_l1)
        return cross_gram(dists, self.model.channel_means)

    def classify_hists(self, hists: dict[Channel, BovwHist]) -> Prediction:
        return self.model.predict(self.kernel_rows(hists))[0]

    def classify_clip(self, clip: Clip) -> Prediction | None:
        """None when the clip is too short to track."""
        if len(clip.frames) < self.tracker.traj_len + 1:
            return None
        return self.classify_hists(self.encode_clip(clip))

    def command_2best(self, prediction: Prediction) -> list[tuple[int, float]] | None:
        """Top-2 command hypotheses; None when the clip looks like background."""
        if prediction.label == BACKGROUND_LABEL:
            return None
        classes = self.model.classes
        keep = classes != BACKGROUND_LABEL
        order = np.lexsort((classes[keep], -prediction.scores[keep]))
        kept_classes = classes[keep]
        kept_scores = prediction.scores[keep]
        return [(int(kept_classes[i]), float(kept_scores[i])) for i in order[:2]]


def train_gesture_pipeline(
    clips: list[Clip],
    labels: list[int],
    k: int = 64,
    seed: int = 0,
    c: float = DEFAULT_C,
    tracker: TrackerParams = TrackerParams(),
    subsample: int | None = 100_000,
) -> GesturePipeline:
    if len(clips) != len(labels):
        raise InvalidParameterError("clip and label counts differ")
    per_clip = [extract_channel_descriptors(cl, tracker) for cl in clips]
    hists, codebooks = encode_corpus(per_clip, k=k, seed=seed, subsample=subsample)
    dists = {ch: chi2_distance_matrix(_l1_rows(hists[ch])) for ch in CHANNEL_ORDER}
    means = {ch: channel_mean_distance(d) for ch, d in dists.items()}
    gram = multichannel_gram(dists, means)
    model = train_kernel_svm(
        gram,
        np.asarray(labels),
        c=c,
        train_hists={ch: hists[ch] for ch in CHANNEL_ORDER},
        channel_means=means,
        codebook_hashes={ch: cb.content_hash() for ch, cb in codebooks.items()},
    )
    return GesturePipeline(codebooks=codebooks, model=model, tracker=tracker)


def encode_corpus(
    per_clip_descriptors: list[dict[Channel, np.ndarray]],
    k: int,
    seed: int,
    subsample: int | None = 100_000,
) -> tuple[dict[Channel, np.ndarray], dict[Channel, Codebook]]:
    """Train per-channel codebooks on the pool and encode every clip."""
    from .encoding import bovw_encode

    codebooks = {}
    hists = {}
    for offset, ch in enumerate(CHANNEL_ORDER):
        pool = np.vstack([d[ch] for d in per_clip_descriptors if d[ch].shape[0]])
        codebooks[ch] = train_codebook(
            pool, k=k, seed=seed + offset, channel=ch, subsample=subsample
        )
        hists[ch] = np.stack(
            [bovw_encode(d[ch], codebooks[ch]).counts for d in per_clip_descriptors]
        )
    return hists, codebooks


def _l1_rows(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    sums = h.sum(axis=1, keepdims=True)
    return np.divide(h, sums, out=np.zeros_like(h), where=sums > 0)


def evaluate_loo_bovw(
    dists: dict[Channel, np.ndarray],
    labels: np.ndarray,
    channels: tuple[Channel, ...] = CHANNEL_ORDER,
    c: float = DEFAULT_C,
) -> float:
    """Leave-one-clip-out accuracy from precomputed chi-square distances.

    Channel normalizers and the SVM are re-trained per fold on the held-in
    samples only; the codebooks behind `dists` were learned once on the full
    descriptor pool, which is the usual vocabulary treatment.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    correct = 0
    for i in range(n):
        keep = np.arange(n) != i
        fold_dists = {ch: dists[ch][np.ix_(keep, keep)] for ch in channels}
        means = {ch: channel_mean_distance(d) for ch, d in fold_dists.items()}
        gram = multichannel_gram(fold_dists, means)
        model = train_kernel_svm(gram, labels[keep], c=c)
        row = cross_gram(
            {ch: dists[ch][i, keep][None, :] for ch in channels}, means
        )
        if model.predict(row)[0].label == labels[i]:
            correct += 1
    return correct / n
