"""Detections and their learned representation.

A detection's unary embedding deliberately excludes position: each remaining
field goes through its own small embedding layer, the results are fused into
x_det.  Position information only ever enters through frame-to-frame movement
offsets, so the whole representation is invariant to translating the scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import ModelParams
from .numerics import Tape, Var, mlp_forward

__all__ = ["Detection", "FrameArrays", "DetEmbedding", "MovementFeature",
           "embed_detection", "embed_frame", "movement_feature",
           "movement_batch", "compose_input"]


@dataclass
class Detection:
    """One detector output at one frame (z axis ignored throughout)."""

    pos: tuple[float, float]
    velo: tuple[float, float]
    size: tuple[float, float, float]
    heading: float
    score: float
    frame: int = 0
    local_index: int = 0


@dataclass
class FrameArrays:
    """Column view of one frame's detections for batched math."""

    pos: np.ndarray      # (N, 2)
    velo: np.ndarray     # (N, 2)
    size: np.ndarray     # (N, 3)
    heading: np.ndarray  # (N,)
    score: np.ndarray    # (N,)

    @classmethod
    def from_detections(cls, dets: list[Detection]) -> "FrameArrays":
        n = len(dets)
        out = cls(pos=np.zeros((n, 2)), velo=np.zeros((n, 2)),
                  size=np.zeros((n, 3)), heading=np.zeros(n), score=np.zeros(n))
        for i, d in enumerate(dets):
            out.pos[i] = d.pos
            out.velo[i] = d.velo
            out.size[i] = d.size
            out.heading[i] = d.heading
            out.score[i] = d.score
        return out

    def __len__(self) -> int:
        return self.pos.shape[0]


@dataclass
class DetEmbedding:
    x_det: Var  # (1, det_dim)


@dataclass
class MovementFeature:
    x_mov: Var             # (1, mov_dim)
    raw_offset: np.ndarray  # (2,) meters


def embed_frame(tape: Tape, params: ModelParams, frame: FrameArrays) -> Var:
    """Unary embeddings for a whole frame, (N, det_dim)."""
    head = np.stack([np.cos(frame.heading), np.sin(frame.heading)], axis=1)
    parts = [
        mlp_forward(tape, params.mlp_velo, frame.velo),
        mlp_forward(tape, params.mlp_size, frame.size),
        mlp_forward(tape, params.mlp_head, head),
        mlp_forward(tape, params.mlp_score, frame.score[:, None]),
    ]
    return mlp_forward(tape, params.mlp_fus, tape.concat(parts))


def embed_detection(tape: Tape, params: ModelParams, d: Detection) -> DetEmbedding:
    frame = FrameArrays.from_detections([d])
    return DetEmbedding(x_det=embed_frame(tape, params, frame))


def movement_batch(tape: Tape, params: ModelParams, offsets: np.ndarray) -> Var:
    """Embed position offsets (P, 2) in meters, (P, mov_dim)."""
    return mlp_forward(tape, params.mlp_mov, offsets)


def movement_feature(tape: Tape, params: ModelParams, d_prev: Detection,
                     d_curr: Detection) -> MovementFeature:
    if d_prev.frame != d_curr.frame - 1:
        raise ConfigError(f"movement_feature: frames {d_prev.frame} and "
                          f"{d_curr.frame} are not adjacent")
    offset = np.array([d_curr.pos[0] - d_prev.pos[0],
                       d_curr.pos[1] - d_prev.pos[1]])
    return MovementFeature(x_mov=movement_batch(tape, params, offset[None, :]),
                           raw_offset=offset)


def compose_input(tape: Tape, e: DetEmbedding, m: MovementFeature) -> Var:
    """Pair input x = [x_det ; x_mov]."""
    return tape.concat([e.x_det, m.x_mov])
