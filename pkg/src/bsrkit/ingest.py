"""Experimental-data path: load thermal film sequences, reduce the vertical
axis by averaging, collapse time with the maximum-thermogram rule, and
stack per-measurement profiles into a solver-ready measurement set.

A sequence is a (n_y, n_r, n_t) tensor for one measurement: vertical
pixels, horizontal pixels, time frames.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import fileio


@dataclass
class ThermalSequence:
    frames: np.ndarray            # (n_y, n_r, n_t)
    frame_rate: float = 1.0
    pixel_pitch: float = 1.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 3 or self.frames.shape[2] < 1:
            raise ValueError("frames must be a (n_y, n_r, n_t) tensor")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames must be finite")


def vertical_mean(seq: ThermalSequence) -> np.ndarray:
    """Arithmetic mean over the vertical pixel axis; (n_r, n_t) profile."""
    return np.mean(seq.frames, axis=0)


def select_max_frame(profile) -> int:
    """Index of the frame with the highest spatial mean after subtracting
    the pre-excitation frame 0; ties break to the earliest frame.

    This is the default "background-subtracted mean" selection rule; pass
    any (profile) -> int callable to the callers that accept a strategy.
    """
    profile = np.asarray(profile, dtype=float)
    if profile.ndim != 2 or profile.shape[1] < 1:
        raise ValueError("profile must be an (n_r, n_t) matrix")
    if profile.shape[1] == 1:
        return 0
    scores = np.mean(profile[:, 1:] - profile[:, :1], axis=0)
    return 1 + int(np.argmax(scores))


def maximum_thermogram(profile, strategy=select_max_frame) -> np.ndarray:
    """Reduce an (n_r, n_t) profile to the single highest-signal frame.

    Returns the selected frame minus the frame-0 background; a
    single-frame profile passes through unchanged.
    """
    profile = np.asarray(profile, dtype=float)
    idx = strategy(profile)
    if profile.shape[1] == 1:
        return profile[:, 0].copy()
    return profile[:, idx] - profile[:, 0]


def assemble_measurements(reduced) -> np.ndarray:
    """Stack per-measurement vectors into an (n_r, n_meas) matrix."""
    vectors = [np.asarray(v, dtype=float).ravel() for v in reduced]
    if not vectors:
        raise ValueError("no measurements to assemble")
    length = vectors[0].size
    for i, v in enumerate(vectors):
        if v.size != length:
            raise ValueError(
                f"measurement {i} has length {v.size}, expected {length}")
    return np.column_stack(vectors)


def load_sequence(path) -> ThermalSequence:
    """Read one measurement: a 3-D array file, or a directory of per-frame
    CSV files listed (in time order) by a small JSON manifest."""
    if os.path.isdir(path):
        manifest = fileio.read_json(os.path.join(path, "manifest.json"))
        frame_files = manifest.get("frames")
        if not frame_files:
            raise fileio.DataFormatError(f"{path}: sequence manifest lists no frames")
        frames = [fileio.read_csv(os.path.join(path, f)) for f in frame_files]
        tensor = np.stack(frames, axis=2)
        return ThermalSequence(tensor,
                               frame_rate=float(manifest.get("frame_rate", 1.0)),
                               pixel_pitch=float(manifest.get("pixel_pitch", 1.0)))
    arr = fileio.read_array(path)
    if arr.ndim != 3:
        raise fileio.DataFormatError(f"{path}: expected a 3-D sequence tensor")
    return ThermalSequence(arr)
