"""Readers and writers for the three CSV schemas: poses, ranges and ground truth.

Floats are written with `repr`, which round-trips float64 exactly, so a
file written here and read back gives bit-identical values.
"""

import csv
import math
import os
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from UWBInit.errors import ParseError
from UWBInit.initializer import PoseBuffer

POSE_HEADER = ("t", "x", "y", "z")
RANGE_HEADER = ("t", "anchor_id", "range")
TRUTH_HEADER = ("anchor_id", "x", "y", "z", "bias")


def _float(path, line: int, name: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"column `{name}` is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, line, f"column `{name}` is not finite: {text!r}")
    return value


def _rows(path, header: Tuple[str, ...]) -> Iterator[Tuple[int, List[str]]]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        first = next(reader, None)
        if first is None:
            raise ParseError(path, 1, f"empty file, expected header `{','.join(header)}`")
        if tuple(cell.strip() for cell in first) != header:
            raise ParseError(path, 1, f"expected header `{','.join(header)}`, got `{','.join(first)}`")
        for row in reader:
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} columns, got {len(row)}")
            yield reader.line_num, [cell.strip() for cell in row]


def load_poses(path) -> PoseBuffer:
    t, positions = [], []
    for line, row in _rows(path, POSE_HEADER):
        ti = _float(path, line, "t", row[0])
        if t and ti <= t[-1]:
            raise ParseError(path, line, f"timestamps must be strictly increasing, {ti!r} follows {t[-1]!r}")
        t.append(ti)
        positions.append([_float(path, line, name, text) for name, text in zip(POSE_HEADER[1:], row[1:])])
    if not t:
        raise ParseError(path, 2, "no poses")
    return PoseBuffer(np.asarray(t), np.asarray(positions))


def load_ranges(path) -> List[Tuple[float, str, float]]:
    """Range messages (t, anchor_id, d) in file order.

    Timestamps must not decrease; equal timestamps are fine across anchors but
    not within one anchor.
    """
    messages = []
    last_t = {}
    for line, (t_text, anchor_id, d_text) in _rows(path, RANGE_HEADER):
        t = _float(path, line, "t", t_text)
        d = _float(path, line, "range", d_text)
        if not anchor_id:
            raise ParseError(path, line, "empty anchor_id")
        if d < 0.0:
            raise ParseError(path, line, f"negative range {d!r}")
        if messages and t < messages[-1][0]:
            raise ParseError(path, line, f"ranges must be ordered by t, {t!r} follows {messages[-1][0]!r}")
        if last_t.get(anchor_id) == t:
            raise ParseError(path, line, f"duplicate timestamp {t!r} for anchor {anchor_id!r}")
        last_t[anchor_id] = t
        messages.append((t, anchor_id, d))
    return messages


def load_truth(path) -> Dict[str, Tuple[np.ndarray, float]]:
    truth = {}
    for line, row in _rows(path, TRUTH_HEADER):
        anchor_id = row[0]
        if not anchor_id:
            raise ParseError(path, line, "empty anchor_id")
        if anchor_id in truth:
            raise ParseError(path, line, f"duplicate anchor_id {anchor_id!r}")
        values = [_float(path, line, name, text) for name, text in zip(TRUTH_HEADER[1:], row[1:])]
        truth[anchor_id] = (np.asarray(values[:3]), values[3])
    return truth


def _writer(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    return open(path, "w", newline="")


def write_poses(path, poses: PoseBuffer) -> None:
    times, positions = poses.arrays()
    with _writer(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(POSE_HEADER)
        for t, p in zip(times, positions):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in p])


def write_ranges(path, messages: Sequence[Tuple[float, str, float]]) -> None:
    with _writer(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RANGE_HEADER)
        for t, anchor_id, d in messages:
            writer.writerow([repr(float(t)), anchor_id, repr(float(d))])


def write_truth(path, truth: Dict[str, Tuple[np.ndarray, float]]) -> None:
    with _writer(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRUTH_HEADER)
        for anchor_id, (position, bias) in truth.items():
            writer.writerow([anchor_id] + [repr(float(v)) for v in position] + [repr(float(bias))])
