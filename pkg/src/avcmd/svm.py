"""Soft-margin SVM trainers and one-against-all prediction.

Two trainers share the multiclass machinery:

* a kernel SVM on a precomputed Gram matrix, solved per class with SMO-style
  pairwise updates (maximal-violating-pair selection, KKT stop);
* a linear SVM solved per class with dual coordinate descent on the hinge
  loss, with the bias folded in as an augmented feature.

Prediction picks the class with the highest decision value; exact ties go to
the lowest class id and are flagged. Raw decision values are exposed because
the fusion layer consumes ranked hypothesis lists, not probabilities.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import Channel
from .errors import (
    BadMagicError,
    DegenerateInputError,
    InvalidParameterError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MODEL_MAGIC = b"IGSV"
MODEL_VERSION = 1
KIND_KERNEL = 0
KIND_LINEAR = 1

DEFAULT_C = 100.0


@dataclass(frozen=True)
class Prediction:
    label: int
    scores: np.ndarray  # per-class decision values, aligned with model.classes
    tie: bool


@dataclass
class BinarySolution:
    support: np.ndarray  # indices into the training set
    coef: np.ndarray     # alpha_i * y_i at the support indices
    bias: float
    iterations: int


def _smo_binary(gram: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3,
                max_iter: int = 10_000) -> BinarySolution:
    """Solve the binary soft-margin dual on a precomputed kernel.

    Maintains f_i = sum_k alpha_k y_k K_ik and repeatedly updates the
    maximal violating pair until the KKT gap drops below `tol`.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    f = np.zeros(n)
    eps = 1e-12
    it = 0
    for it in range(1, max_iter + 1):
        vals = y - f  # equals -E_i; also -y_i * grad_i
        up = ((y > 0) & (alpha < c - eps)) | ((y < 0) & (alpha > eps))
        low = ((y < 0) & (alpha < c - eps)) | ((y > 0) & (alpha > eps))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(vals[up])])
        j = int(np.flatnonzero(low)[np.argmin(vals[low])])
        if vals[i] - vals[j] < tol:
            break

        eta = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        if eta <= 0:
            eta = 1e-12
        a_j_old, a_i_old = alpha[j], alpha[i]
        # box bounds on alpha_j holding alpha_i + s*alpha_j fixed
        if y[i] != y[j]:
            lo = max(0.0, a_j_old - a_i_old)
            hi = min(c, c + a_j_old - a_i_old)
        else:
            lo = max(0.0, a_i_old + a_j_old - c)
            hi = min(c, a_i_old + a_j_old)
        e_i = f[i] - y[i]
        e_j = f[j] - y[j]
        a_j = np.clip(a_j_old + y[j] * (e_i - e_j) / eta, lo, hi)
        a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j)
        alpha[i], alpha[j] = a_i, a_j
        f += gram[:, i] * (y[i] * (a_i - a_i_old)) + gram[:, j] * (y[j] * (a_j - a_j_old))

    vals = y - f
    free = (alpha > eps) & (alpha < c - eps)
    if free.any():
        bias = float(vals[free].mean())
    else:
        up = ((y > 0) & (alpha < c - eps)) | ((y < 0) & (alpha > eps))
        low = ((y < 0) & (alpha < c - eps)) | ((y > 0) & (alpha > eps))
        hi = vals[up].max() if up.any() else 0.0
        lo = vals[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    support = np.flatnonzero(alpha > 1e-8)
    return BinarySolution(
        support=support,
        coef=alpha[support] * y[support],
        bias=bias,
        iterations=it,
    )


def _check_labels(labels: np.ndarray) -> np.ndarray:
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateInputError("training needs at least two classes")
    return classes


@dataclass
class KernelSvmModel:
    """One-against-all kernel SVM over chi-square histogram channels.

    Keeps whatever the decision function needs at prediction time: the
    support expansion per class plus (optionally) the training histograms
    and channel normalizers used to kernelize new samples.
    """

    classes: np.ndarray
    solutions: list[BinarySolution]
    n_train: int
    c: float
    train_hists: dict[Channel, np.ndarray] | None = None  # (n_train, K) raw counts
    channel_means: dict[Channel, float] | None = None
    codebook_hashes: dict[Channel, str] = field(default_factory=dict)

    def decision_values(self, kernel_rows: np.ndarray) -> np.ndarray:
        """Per-class scores for kernel rows of shape (n_test, n_train)."""
        k = np.atleast_2d(np.asarray(kernel_rows, dtype=np.float64))
        if k.shape[1] != self.n_train:
            raise InvalidParameterError(
                f"kernel rows have {k.shape[1]} columns, expected {self.n_train}"
            )
        out = np.empty((k.shape[0], self.classes.size))
        for idx, sol in enumerate(self.solutions):
            out[:, idx] = k[:, sol.support] @ sol.coef + sol.bias
        return out

    def predict(self, kernel_rows: np.ndarray) -> list[Prediction]:
        return [_argmax_prediction(self.classes, row) for row in self.decision_values(kernel_rows)]


@dataclass
class LinearSvmModel:
    classes: np.ndarray
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray   # (n_classes,)
    c: float
    degenerate: bool = False
    codebook_hashes: dict[Channel, str] = field(default_factory=dict)

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.weights.shape[1]:
            raise InvalidParameterError(
                f"feature dim {x.shape[1]} does not match model dim {self.weights.shape[1]}"
            )
        return x @ self.weights.T + self.biases

    def predict(self, x: np.ndarray) -> list[Prediction]:
        return [_argmax_prediction(self.classes, row) for row in self.decision_values(x)]


def _argmax_prediction(classes: np.ndarray, scores: np.ndarray) -> Prediction:
    best = int(np.argmax(scores))  # first maximum = lowest class id
    tie = bool(np.sum(scores == scores[best]) > 1)
    return Prediction(label=int(classes[best]), scores=scores.copy(), tie=tie)


def predict_ova(model, sample) -> Prediction:
    """Single-sample one-against-all prediction for either model kind."""
    return model.predict(np.atleast_2d(sample))[0]


def nbest(prediction: Prediction, classes: np.ndarray, n: int = 2) -> list[tuple[int, float]]:
    """Classes sorted by decision value, best first; ties by lower class id."""
    order = np.lexsort((classes, -prediction.scores))
    return [(int(classes[i]), float(prediction.scores[i])) for i in order[:n]]


def train_kernel_svm(
    gram: np.ndarray,
    labels: np.ndarray,
    c: float = DEFAULT_C,
    tol: float = 1e-3,
    max_iter: int = 10_000,
    train_hists: dict[Channel, np.ndarray] | None = None,
    channel_means: dict[Channel, float] | None = None,
    codebook_hashes: dict[Channel, str] | None = None,
) -> KernelSvmModel:
    """Train one binary SMO problem per class on a precomputed Gram matrix."""
    g = np.asarray(gram, dtype=np.float64)
    labels = np.asarray(labels)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidParameterError("gram matrix must be square")
    if g.shape[0] != labels.shape[0]:
        raise InvalidParameterError("gram size and label count differ")
    if not np.allclose(g, g.T, atol=1e-6):
        raise InvalidParameterError("gram matrix is not symmetric (tolerance 1e-6)")
    classes = _check_labels(labels)

    solutions = []
    for cls in classes:
        y = np.where(labels == cls, 1.0, -1.0)
        solutions.append(_smo_binary(g, y, c, tol=tol, max_iter=max_iter))
    return KernelSvmModel(
        classes=classes,
        solutions=solutions,
        n_train=g.shape[0],
        c=c,
        train_hists=train_hists,
        channel_means=channel_means,
        codebook_hashes=dict(codebook_hashes or {}),
    )


def _dual_cd_binary(x: np.ndarray, y: np.ndarray, c: float, gap_rtol: float,
                    max_epochs: int, seed: int) -> tuple[np.ndarray, int]:
    """Dual coordinate descent for the L1 hinge loss.

    Bias-free formulation: keeps the dual box-constrained only, so the
    per-coordinate update is exact and scaling data by lambda with C
    rescaled by 1/lambda^2 reproduces the identical optimization path.
    Stops on the relative duality gap.
    """
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    w = np.zeros(x.shape[1])
    q_diag = (x * x).sum(axis=1)
    epochs = 0
    for epochs in range(1, max_epochs + 1):
        for i in rng.permutation(n):
            if q_diag[i] <= 0.0:
                continue
            g = y[i] * (x[i] @ w) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            if abs(pg) > 1e-12:
                new = min(max(alpha[i] - g / q_diag[i], 0.0), c)
                if new != alpha[i]:
                    w += (new - alpha[i]) * y[i] * x[i]
                    alpha[i] = new
        margins = 1.0 - y * (x @ w)
        primal = 0.5 * float(w @ w) + c * float(np.clip(margins, 0.0, None).sum())
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        if primal - dual <= gap_rtol * max(abs(primal), 1.0):
            break
    return w, epochs


def train_linear_svm(
    x: np.ndarray,
    labels: np.ndarray,
    c: float = DEFAULT_C,
    gap_rtol: float = 1e-3,
    max_epochs: int = 1000,
    seed: int = 0,
    codebook_hashes: dict[Channel, str] | None = None,
) -> LinearSvmModel:
    """Per-class hinge-loss linear SVMs via dual coordinate descent.

    The encoder output is zero-centered and L2-normalized, so the separating
    planes pass near the origin and the biases stay at zero; an all-zero
    feature matrix is flagged degenerate and falls back to class-prior
    biases so prediction returns the majority class.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2:
        raise InvalidParameterError("features must be a (N, dim) matrix")
    if x.shape[0] != labels.shape[0]:
        raise InvalidParameterError("feature rows and label count differ")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("features contain non-finite values")
    classes = _check_labels(labels)
    degenerate = bool(np.all(x == 0.0))

    weights = np.zeros((classes.size, x.shape[1]))
    biases = np.zeros(classes.size)
    if degenerate:
        for idx, cls in enumerate(classes):
            biases[idx] = float(np.mean(labels == cls))
    else:
        for idx, cls in enumerate(classes):
            y = np.where(labels == cls, 1.0, -1.0)
            w, _ = _dual_cd_binary(x, y, c, gap_rtol, max_epochs, seed + idx)
            weights[idx] = w
    return LinearSvmModel(
        classes=classes,
        weights=weights,
        biases=biases,
        c=c,
        degenerate=degenerate,
        codebook_hashes=dict(codebook_hashes or {}),
    )


# ---------------------------------------------------------------------------
# model file: magic, version u16, kind u8, class count u16, then the payload
# described below; codebook references are stored as sha256 digests so a
# classifier refuses histograms produced by a different vocabulary.

def _pack_hashes(hashes: dict[Channel, str]) -> bytes:
    out = [struct.pack("<B", len(hashes))]
    for ch in sorted(hashes, key=int):
        out.append(struct.pack("<B", int(ch)))
        out.append(bytes.fromhex(hashes[ch]))
    return b"".join(out)


def _unpack_hashes(raw: bytes, off: int) -> tuple[dict[Channel, str], int]:
    (count,) = struct.unpack_from("<B", raw, off)
    off += 1
    hashes = {}
    for _ in range(count):
        (tag,) = struct.unpack_from("<B", raw, off)
        off += 1
        hashes[Channel(tag)] = raw[off : off + 32].hex()
        off += 32
    return hashes, off


def write_model(path: str | Path, model: KernelSvmModel | LinearSvmModel) -> None:
    parts: list[bytes] = [MODEL_MAGIC]
    if isinstance(model, KernelSvmModel):
        kind = KIND_KERNEL
    elif isinstance(model, LinearSvmModel):
        kind = KIND_LINEAR
    else:
        raise InvalidParameterError(f"cannot serialize {type(model).__name__}")
    parts.append(struct.pack("<HBH", MODEL_VERSION, kind, model.classes.size))
    parts.append(struct.pack("<d", model.c))
    parts.append(_pack_hashes(model.codebook_hashes))

    if kind == KIND_KERNEL:
        hists = model.train_hists or {}
        means = model.channel_means or {}
        parts.append(struct.pack("<IB", model.n_train, len(hists)))
        for ch in sorted(hists, key=int):
            h = np.asarray(hists[ch])
            parts.append(struct.pack("<BId", int(ch), h.shape[1], float(means[ch])))
            parts.append(h.astype("<f4").tobytes())
        for cls, sol in zip(model.classes, model.solutions):
            parts.append(struct.pack("<idI", int(cls), sol.bias, sol.support.size))
            parts.append(sol.support.astype("<u4").tobytes())
            parts.append(sol.coef.astype("<f8").tobytes())
    else:
        parts.append(struct.pack("<IB", model.weights.shape[1], int(model.degenerate)))
        for cls, w, b in zip(model.classes, model.weights, model.biases):
            parts.append(struct.pack("<id", int(cls), float(b)))
            parts.append(w.astype("<f4").tobytes())

    Path(path).write_bytes(b"".join(parts))


def read_model(path: str | Path) -> KernelSvmModel | LinearSvmModel:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MODEL_MAGIC:
        raise BadMagicError("not a model file")
    try:
        version, kind, n_classes = struct.unpack_from("<HBH", raw, 4)
        off = 4 + struct.calcsize("<HBH")
        if version != MODEL_VERSION:
            raise UnsupportedVersionError(f"model version {version} not supported")
        (c,) = struct.unpack_from("<d", raw, off)
        off += 8
        hashes, off = _unpack_hashes(raw, off)

        if kind == KIND_KERNEL:
            n_train, n_hists = struct.unpack_from("<IB", raw, off)
            off += 5
            train_hists: dict[Channel, np.ndarray] = {}
            means: dict[Channel, float] = {}
            for _ in range(n_hists):
                tag, k, a_c = struct.unpack_from("<BId", raw, off)
                off += struct.calcsize("<BId")
                h = np.frombuffer(raw, dtype="<f4", count=n_train * k, offset=off)
                off += n_train * k * 4
                train_hists[Channel(tag)] = h.reshape(n_train, k).astype(np.float64)
                means[Channel(tag)] = a_c
            classes = []
            solutions = []
            for _ in range(n_classes):
                cls, bias, n_sv = struct.unpack_from("<idI", raw, off)
                off += struct.calcsize("<idI")
                support = np.frombuffer(raw, dtype="<u4", count=n_sv, offset=off).astype(np.intp)
                off += n_sv * 4
                coef = np.frombuffer(raw, dtype="<f8", count=n_sv, offset=off).astype(np.float64)
                off += n_sv * 8
                classes.append(cls)
                solutions.append(BinarySolution(support=support, coef=coef, bias=bias, iterations=0))
            return KernelSvmModel(
                classes=np.asarray(classes),
                solutions=solutions,
                n_train=n_train,
                c=c,
                train_hists=train_hists or None,
                channel_means=means or None,
                codebook_hashes=hashes,
            )
        if kind == KIND_LINEAR:
            dim, degenerate = struct.unpack_from("<IB", raw, off)
            off += 5
            classes = []
            weights = np.empty((n_classes, dim))
            biases = np.empty(n_classes)
            for i in range(n_classes):
                cls, bias = struct.unpack_from("<id", raw, off)
                off += struct.calcsize("<id")
                w = np.frombuffer(raw, dtype="<f4", count=dim, offset=off).astype(np.float64)
                off += dim * 4
                classes.append(cls)
                weights[i] = w
                biases[i] = bias
            return LinearSvmModel(
                classes=np.asarray(classes),
                weights=weights,
                biases=biases,
                c=c,
                degenerate=bool(degenerate),
                codebook_hashes=hashes,
            )
        raise UnsupportedVersionError(f"unknown model kind {kind}")
    except struct.error:
        raise TruncatedPayloadError("model file truncated") from None
