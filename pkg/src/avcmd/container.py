"""Binary clip container and the JSON-lines annotation sidecar.

Container layout (little-endian):

    magic   4 bytes  "IGSC"
    version u16      1
    modality u8      0 = RGB converted to gray, 1 = log-depth, 2 = raw depth
    sensor  u8       1..3
    width   u16
    height  u16
    frames  u32
    fps     f32
    payload frames * width * height bytes, row-major per frame

The clip label is not part of the container; it travels in the annotation
sidecar, one JSON object per line with fields
{clip, label, subject, task, start_frame, end_frame}.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionOverflowError,
    FormatError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .frames import Clip, GrayFrame, Modality, Sensor

CLIP_MAGIC = b"IGSC"
CLIP_VERSION = 1
_HEADER = struct.Struct("<4sHBBHHIf")


@dataclass(frozen=True)
class Annotation:
    clip: str
    label: int | None
    subject: str
    task: str
    start_frame: int
    end_frame: int


def write_clip(path: str | Path, clip: Clip) -> None:
    if clip.width > 0xFFFF or clip.height > 0xFFFF:
        raise DimensionOverflowError("frame dimensions exceed u16")
    if len(clip.frames) > 0xFFFFFFFF:
        raise DimensionOverflowError("frame count exceeds u32")
    header = _HEADER.pack(
        CLIP_MAGIC,
        CLIP_VERSION,
        int(clip.modality),
        int(clip.sensor_id),
        clip.width,
        clip.height,
        len(clip.frames),
        float(clip.fps),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for frame in clip.frames:
            fh.write(frame.data.tobytes())


def read_clip(path: str | Path, label: int | None = None) -> Clip:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError("file shorter than the container header")
    magic, version, modality, sensor, width, height, n_frames, fps = _HEADER.unpack_from(raw)
    if magic != CLIP_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != CLIP_VERSION:
        raise UnsupportedVersionError(f"container version {version} not supported")
    if width == 0 or height == 0 or n_frames == 0:
        raise FormatError("container declares an empty clip")
    frame_size = width * height
    expected = _HEADER.size + n_frames * frame_size
    if len(raw) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(raw) - _HEADER.size} bytes, expected {n_frames * frame_size}"
        )
    try:
        modality = Modality(modality)
        sensor = Sensor(sensor)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    data = np.frombuffer(raw, dtype=np.uint8, count=n_frames * frame_size, offset=_HEADER.size)
    frames = tuple(
        GrayFrame(width=width, height=height, data=data[i * frame_size : (i + 1) * frame_size])
        for i in range(n_frames)
    )
    return Clip(frames=frames, fps=fps, modality=modality, sensor_id=sensor, label=label)


def write_annotations(path: str | Path, annotations: list[Annotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in annotations:
            fh.write(
                json.dumps(
                    {
                        "clip": a.clip,
                        "label": a.label,
                        "subject": a.subject,
                        "task": a.task,
                        "start_frame": a.start_frame,
                        "end_frame": a.end_frame,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_annotations(path: str | Path) -> list[Annotation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    Annotation(
                        clip=obj["clip"],
                        label=obj["label"],
                        subject=obj["subject"],
                        task=obj["task"],
                        start_frame=int(obj["start_frame"]),
                        end_frame=int(obj["end_frame"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad annotation on line {lineno}: {exc}") from None
    return out


def load_annotated_clip(clip_path: str | Path, annotations: list[Annotation]) -> Clip:
    """Read a clip and attach the label found for it in the sidecar."""
    name = Path(clip_path).name
    label = None
    for a in annotations:
        if a.clip == name:
            label = a.label
            break
    return read_clip(clip_path, label=label)
