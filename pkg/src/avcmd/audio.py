"""Grammar-constrained spoken-command classification.

Utterances and per-command templates are MFCC sequences compared with
dynamic time warping (steps right/down/diagonal, Euclidean frame cost,
normalized by the two sequence lengths). A command's score is its best
template distance; the ranked command list is the n-best a downstream
fusion stage consumes. Speaker mismatch is reduced with one global affine
feature transform fitted on DTW-aligned enrollment data, and a wake-word
gate suppresses every hypothesis when the keyword score is below threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError
from .mfcc import FEATURE_DIM, MfccSeq, mfcc, wav_read
from .vocabulary import DEFAULT_KEYWORD, SURFACE_FORMS, Command

MAX_CONDITION = 1e6


@dataclass(frozen=True)
class GrammarEntry:
    command: int
    surface: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class CommandGrammar:
    entries: tuple[GrammarEntry, ...]
    keyword: str = DEFAULT_KEYWORD

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise InvalidParameterError("grammar needs at least one command")
        ids = [e.command for e in entries]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("grammar command ids must be unique")
        object.__setattr__(self, "entries", entries)

    @property
    def commands(self) -> list[int]:
        return [e.command for e in self.entries]


def default_grammar() -> CommandGrammar:
    return CommandGrammar(
        entries=tuple(
            GrammarEntry(command=int(c), surface=dict(SURFACE_FORMS[c])) for c in Command
        ),
        keyword=DEFAULT_KEYWORD,
    )


@dataclass(frozen=True)
class Hypothesis:
    command: int
    score: float  # DTW distance; lower is better


@dataclass(frozen=True)
class NBest:
    hypotheses: tuple[Hypothesis, ...]
    tie: bool = False

    @property
    def is_empty(self) -> bool:
        return not self.hypotheses

    @property
    def top(self) -> Hypothesis | None:
        return self.hypotheses[0] if self.hypotheses else None

    @classmethod
    def empty(cls) -> "NBest":
        return cls(hypotheses=())


@dataclass(frozen=True)
class SpeakerTransform:
    """Global affine feature map x -> A x + b."""

    a: np.ndarray  # (39, 39)
    b: np.ndarray  # (39,)
    bias_only: bool = False

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.shape != (FEATURE_DIM, FEATURE_DIM) or b.shape != (FEATURE_DIM,):
            raise InvalidParameterError("transform has the wrong shape")
        if np.linalg.cond(a) >= MAX_CONDITION:
            raise InvalidParameterError("transform matrix is ill-conditioned")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def apply(self, seq: MfccSeq) -> MfccSeq:
        return MfccSeq(
            frames=seq.frames @ self.a.T + self.b,
            sample_rate=seq.sample_rate,
            frame_len_s=seq.frame_len_s,
            frame_shift_s=seq.frame_shift_s,
        )

    @classmethod
    def identity(cls) -> "SpeakerTransform":
        return cls(a=np.eye(FEATURE_DIM), b=np.zeros(FEATURE_DIM))


# ---------------------------------------------------------------------------
# dynamic time warping

def _frame_costs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Explicit differences: the dot-product expansion loses the exact zeros
    # on identical frames to cancellation, and d(x, x) = 0 is contractual.
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _dtw_tables(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated cost and predecessor tables, filled along anti-diagonals."""
    ta, tb = a.shape[0], b.shape[0]
    cost = _frame_costs(a, b)
    acc = np.full((ta, tb), np.inf)
    move = np.zeros((ta, tb), dtype=np.uint8)  # 0 start, 1 diag, 2 up, 3 left
    prev1 = np.full(ta, np.inf)  # diagonal s-1, indexed by row
    prev2 = np.full(ta, np.inf)  # diagonal s-2
    for s in range(ta + tb - 1):
        i_lo = max(0, s - (tb - 1))
        i_hi = min(s, ta - 1)
        i = np.arange(i_lo, i_hi + 1)
        j = s - i
        c = cost[i, j]
        if s == 0:
            cur_vals = c
            move[0, 0] = 0
        else:
            up = np.where(i > 0, prev1[np.maximum(i - 1, 0)], np.inf)      # (i-1, j)
            left = prev1[i]                                                 # (i, j-1)
            left = np.where(j > 0, left, np.inf)
            diag = np.where((i > 0) & (j > 0), prev2[np.maximum(i - 1, 0)], np.inf)
            stacked = np.stack([diag, up, left])
            choice = np.argmin(stacked, axis=0)  # prefers diag on ties
            cur_vals = c + stacked[choice, np.arange(i.size)]
            move[i, j] = choice + 1
        acc[i, j] = cur_vals
        prev2 = prev1
        prev1 = np.full(ta, np.inf)
        prev1[i] = cur_vals
    return acc, move


def _coerce(seq) -> np.ndarray:
    if isinstance(seq, MfccSeq):
        return seq.frames
    a = np.asarray(seq, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1:
        raise InvalidParameterError("sequence must be a non-empty (T, dim) matrix")
    return a


def dtw_distance(a, b) -> float:
    """Path-length-normalized DTW distance: min path cost / (Ta + Tb)."""
    fa, fb = _coerce(a), _coerce(b)
    if fa.shape[1] != fb.shape[1]:
        raise InvalidParameterError("sequences must share the feature dimension")
    acc, _ = _dtw_tables(fa, fb)
    return float(acc[-1, -1] / (fa.shape[0] + fb.shape[0]))


def dtw_align(a, b) -> tuple[float, list[tuple[int, int]]]:
    """Distance plus the optimal warping path as (frame_a, frame_b) pairs."""
    fa, fb = _coerce(a), _coerce(b)
    if fa.shape[1] != fb.shape[1]:
        raise InvalidParameterError("sequences must share the feature dimension")
    acc, move = _dtw_tables(fa, fb)
    path = []
    i, j = fa.shape[0] - 1, fb.shape[0] - 1
    while True:
        path.append((i, j))
        m = move[i, j]
        if m == 0:
            break
        if m == 1:
            i, j = i - 1, j - 1
        elif m == 2:
            i -= 1
        else:
            j -= 1
    path.reverse()
    return float(acc[-1, -1] / (fa.shape[0] + fb.shape[0])), path


# ---------------------------------------------------------------------------
# classification

def classify_command(
    utterance: MfccSeq,
    templates: dict[int, list[MfccSeq]],
    grammar: CommandGrammar,
    transform: SpeakerTransform | None = None,
) -> NBest:
    """Rank grammar commands by their best template DTW distance.

    Ties in the top score are broken toward the lower command id and flagged.
    """
    for cmd in grammar.commands:
        if not templates.get(cmd):
            raise InvalidParameterError(f"command {cmd} has no templates")
    if transform is not None:
        utterance = transform.apply(utterance)
    scored = []
    for cmd in grammar.commands:
        best = min(dtw_distance(utterance, t) for t in templates[cmd])
        scored.append(Hypothesis(command=cmd, score=best))
    scored.sort(key=lambda h: (h.score, h.command))
    tie = len(scored) > 1 and scored[0].score == scored[1].score
    return NBest(hypotheses=tuple(scored), tie=tie)


def keyword_gate(nbest: NBest, keyword_score: float, threshold: float) -> NBest:
    """Pass hypotheses through only when the wake-word score reaches threshold."""
    if keyword_score >= threshold:
        return nbest
    return NBest.empty()


# ---------------------------------------------------------------------------
# speaker adaptation

def adapt_speaker(
    templates: dict[int, list[MfccSeq]],
    enrollment: list[tuple[int, MfccSeq]],
) -> SpeakerTransform:
    """Fit one affine map from enrollment frames to DTW-aligned template frames.

    Needs enrollment for at least three distinct commands. When the frame
    matrix is rank deficient the fit falls back to a bias-only transform
    (A = I) and flags it. The fitted least-squares objective can never exceed
    the identity transform's, since identity is a feasible candidate.
    """
    commands = {cmd for cmd, _ in enrollment}
    if len(commands) < 3:
        raise InvalidParameterError("enrollment must cover at least 3 distinct commands")
    xs, ys = [], []
    for cmd, utt in enrollment:
        if not templates.get(cmd):
            raise InvalidParameterError(f"command {cmd} has no templates")
        best_t, best_d = None, np.inf
        for tmpl in templates[cmd]:
            d = dtw_distance(utt, tmpl)
            if d < best_d:
                best_d, best_t = d, tmpl
        _, path = dtw_align(utt, best_t)
        for i, j in path:
            xs.append(utt.frames[i])
            ys.append(best_t.frames[j])
    x = np.asarray(xs)
    y = np.asarray(ys)

    x_aug = np.hstack([x, np.ones((x.shape[0], 1))])
    solution, _, rank, _ = np.linalg.lstsq(x_aug, y, rcond=None)
    if rank < FEATURE_DIM + 1:
        return SpeakerTransform(
            a=np.eye(FEATURE_DIM), b=(y - x).mean(axis=0), bias_only=True
        )
    a = solution[:-1].T
    b = solution[-1]
    if np.linalg.cond(a) >= MAX_CONDITION:
        return SpeakerTransform(
            a=np.eye(FEATURE_DIM), b=(y - x).mean(axis=0), bias_only=True
        )
    return SpeakerTransform(a=a, b=b)


def alignment_objective(
    templates: dict[int, list[MfccSeq]],
    enrollment: list[tuple[int, MfccSeq]],
    transform: SpeakerTransform,
) -> float:
    """Sum of squared residuals between transformed enrollment and templates."""
    total = 0.0
    for cmd, utt in enrollment:
        best_t, best_d = None, np.inf
        for tmpl in templates[cmd]:
            d = dtw_distance(utt, tmpl)
            if d < best_d:
                best_d, best_t = d, tmpl
        _, path = dtw_align(utt, best_t)
        mapped = utt.frames @ transform.a.T + transform.b
        for i, j in path:
            diff = mapped[i] - best_t.frames[j]
            total += float(diff @ diff)
    return total


# ---------------------------------------------------------------------------
# template store: directory of WAVs plus a JSON manifest

def load_template_store(manifest_path: str | Path) -> dict[int, list[MfccSeq]]:
    """Manifest rows: {command_id, language, speaker, path}; paths are relative."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    templates: dict[int, list[MfccSeq]] = {}
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            rows = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad template manifest: {exc}") from None
    for row in rows:
        try:
            cmd = int(row["command_id"])
            rel = row["path"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad manifest row {row!r}: {exc}") from None
        samples, rate = wav_read(base / rel)
        templates.setdefault(cmd, []).append(mfcc(samples, rate))
    return templates


def save_template_manifest(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
