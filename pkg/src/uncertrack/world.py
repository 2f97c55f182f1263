"""Synthetic multi-agent world and its detector-noise channel.

Ground-truth agents move by one of four motion classes (constant velocity,
constant turn, accelerating, stop-and-go).  Positions always satisfy
pos[t+1] = pos[t] + velo[t] * dt, with constant-turn positions taken from the
closed-form arc so the trace is an exact circle.  The noise channel perturbs
every field, drops detections, injects false positives clustered near real
agents (the insufficient-NMS failure mode), and occasionally multiplies the
position noise by 4 for a few frames to mimic transient localization bursts.

Everything is a pure function of (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affinity import gate_positions
from .detections import Detection
from .errors import ConfigError
from .rng import substream

__all__ = ["AgentTrack", "NoiseConfig", "WorldLog", "MOTION_CLASSES",
           "DEFAULT_MOTION_MIX", "FP_ID", "generate_world",
           "constant_turn_positions", "corrupt_to_detections",
           "make_affinity_labels", "save_world", "load_world"]

MOTION_CLASSES = ("cv", "ct", "acc", "stopgo")
DEFAULT_MOTION_MIX = {"cv": 0.4, "ct": 0.3, "acc": 0.15, "stopgo": 0.15}
FP_ID = -1  # hidden identity of a false positive

_BURST_POS_FACTOR = 4.0
_BURST_FRAMES = (2, 3, 4)


@dataclass
class AgentTrack:
    agent_id: int
    birth_frame: int
    death_frame: int      # inclusive
    pos: np.ndarray       # (L, 2) m
    velo: np.ndarray      # (L, 2) m/s
    heading: np.ndarray   # (L,) rad
    size: np.ndarray      # (L, 3) m, length/width/height

    @property
    def length(self) -> int:
        return self.death_frame - self.birth_frame + 1

    def alive(self, frame: int) -> bool:
        return self.birth_frame <= frame <= self.death_frame

    def index_at(self, frame: int) -> int:
        if not self.alive(frame):
            raise ConfigError(f"agent {self.agent_id} is not alive at frame {frame}")
        return frame - self.birth_frame


@dataclass
class NoiseConfig:
    pos_sigma: float = 0.3
    velo_sigma: float = 0.2
    heading_sigma: float = 0.05
    size_sigma: float = 0.1
    miss_rate: float = 0.1
    fp_rate: float = 1.0
    fp_cluster_sigma: float = 2.0
    score_tp_mean: float = 0.8
    score_fp_mean: float = 0.4
    score_sigma: float = 0.1
    burst_prob: float = 0.02

    def __post_init__(self):
        for name in ("pos_sigma", "velo_sigma", "heading_sigma", "size_sigma",
                     "fp_cluster_sigma", "score_sigma", "fp_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"noise: {name} must be >= 0")
        for name in ("miss_rate", "burst_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"noise: {name} must be in [0, 1]")
        for name in ("score_tp_mean", "score_fp_mean"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"noise: {name} must be in (0, 1)")

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(pos_sigma=0.0, velo_sigma=0.0, heading_sigma=0.0,
                   size_sigma=0.0, miss_rate=0.0, fp_rate=0.0,
                   fp_cluster_sigma=0.0, score_sigma=0.0, burst_prob=0.0)


@dataclass
class WorldLog:
    frame_rate: float
    tracks: list[AgentTrack]
    frames: list[list[Detection]]
    true_ids: list[np.ndarray] = field(default_factory=list)  # FP_ID marks FPs
    rng_seed: int = 0

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def live_agents(self, frame: int) -> list[AgentTrack]:
        return [t for t in self.tracks if t.alive(frame)]


# ---- trajectory generation ---------------------------------------------------


def _headings_from(velo: np.ndarray, fallback: float) -> np.ndarray:
    heading = np.empty(velo.shape[0])
    prev = fallback
    for i in range(velo.shape[0]):
        if np.hypot(velo[i, 0], velo[i, 1]) > 0.1:
            prev = float(np.arctan2(velo[i, 1], velo[i, 0]))
        heading[i] = prev
    return heading


def _integrate(p0: np.ndarray, velo: np.ndarray, dt: float) -> np.ndarray:
    steps = np.vstack([np.zeros(2), velo * dt])
    return p0 + np.cumsum(steps, axis=0)  # (L+1, 2)


def _speed_profile_stopgo(length: int, s0: float, dt: float,
                          rng: np.random.Generator) -> np.ndarray:
    ramp = max(3, int(round(s0 / (3.0 * dt))))  # ~3 m/s^2 ramp
    speeds = []
    while len(speeds) < length + 1:
        speeds.extend([s0] * int(rng.integers(8, 25)))
        speeds.extend(np.linspace(s0, 0.0, ramp).tolist())
        speeds.extend([0.0] * int(rng.integers(5, 15)))
        speeds.extend(np.linspace(0.0, s0, ramp).tolist())
    return np.array(speeds[: length + 1])


def constant_turn_positions(p0: np.ndarray, direction: np.ndarray, speed: float,
                            omega: float, dt: float, n: int):
    """Closed-form circular arc through p0 with tangent ``direction``.

    Returns (positions (n, 2), center, radius); radius = speed / |omega|.
    """
    radius = speed / abs(omega)
    perp = np.array([-direction[1], direction[0]]) * np.sign(omega)
    center = p0 + radius * perp
    phase0 = float(np.arctan2(p0[1] - center[1], p0[0] - center[0]))
    ang = phase0 + omega * np.arange(n) * dt
    pos = np.stack([center[0] + radius * np.cos(ang),
                    center[1] + radius * np.sin(ang)], axis=1)
    return pos, center, radius


def _make_velocities(cls: str, length: int, speed: float, direction: np.ndarray,
                     dt: float, rng: np.random.Generator) -> np.ndarray:
    """Per-frame velocities for the non-circular motion classes, (L+1, 2)."""
    if cls == "cv":
        return np.tile(speed * direction, (length + 1, 1))
    if cls == "acc":
        accel = float(rng.uniform(0.5, 1.5)) * (1 if rng.random() < 0.5 else -1)
        s = np.clip(speed + accel * np.arange(length + 1) * dt, 0.5, 12.0)
        return s[:, None] * direction
    if cls == "stopgo":
        s = _speed_profile_stopgo(length, speed, dt, rng)
        return s[:, None] * direction
    raise ConfigError(f"unknown motion class '{cls}'")


def generate_world(num_agents: int, num_frames: int, frame_rate: float = 10.0,
                   motion_mix: dict[str, float] | None = None, seed: int = 0,
                   area: float = 60.0, t_obs: int = 20, pred_steps: int = 6,
                   step_seconds: float = 0.5) -> list[AgentTrack]:
    """Spawn agents with random life windows long enough to train on."""
    if num_agents < 1:
        raise ConfigError("generate_world: num_agents must be >= 1")
    mix = dict(DEFAULT_MOTION_MIX if motion_mix is None else motion_mix)
    unknown = set(mix) - set(MOTION_CLASSES)
    if unknown:
        raise ConfigError(f"unknown motion classes: {sorted(unknown)}")
    weights = np.array([mix.get(c, 0.0) for c in MOTION_CLASSES], dtype=float)
    if weights.sum() <= 0:
        raise ConfigError("motion_mix weights must sum to a positive value")
    weights /= weights.sum()

    min_life = t_obs + int(round(pred_steps * frame_rate * step_seconds))
    if num_frames < min_life:
        raise ConfigError(f"infeasible window constraints: num_frames "
                          f"{num_frames} < minimum life {min_life}")

    rng = substream(seed, "world-gen")
    dt = 1.0 / frame_rate
    tracks = []
    for agent_id in range(num_agents):
        cls = MOTION_CLASSES[int(rng.choice(len(MOTION_CLASSES), p=weights))]
        length = int(rng.integers(min_life, num_frames + 1))
        birth = int(rng.integers(0, num_frames - length + 1))
        p0 = rng.uniform(-area / 2, area / 2, size=2)
        phi = float(rng.uniform(0.0, 2 * np.pi))
        direction = np.array([np.cos(phi), np.sin(phi)])
        speed = float(rng.uniform(3.0, 8.0))

        if cls == "ct":
            omega = float(rng.uniform(0.15, 0.4)) * (1 if rng.random() < 0.5 else -1)
            pos_ext, _, _ = constant_turn_positions(p0, direction, speed, omega,
                                                    dt, length + 1)
        else:
            velo_ext = _make_velocities(cls, length, speed, direction, dt, rng)
            pos_ext = _integrate(p0, velo_ext[:-1], dt)

        velo = (pos_ext[1:] - pos_ext[:-1]) / dt
        pos = pos_ext[:-1]
        heading = _headings_from(velo, fallback=phi)
        size = np.array([rng.uniform(3.5, 5.5), rng.uniform(1.6, 2.2),
                         rng.uniform(1.4, 2.0)])
        tracks.append(AgentTrack(agent_id=agent_id, birth_frame=birth,
                                 death_frame=birth + length - 1, pos=pos,
                                 velo=velo, heading=heading,
                                 size=np.tile(size, (length, 1))))
    return tracks


# ---- detector noise channel --------------------------------------------------


def _wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def _burst_masks(tracks, noise, rng) -> dict[int, np.ndarray]:
    masks = {}
    for track in tracks:
        mask = np.zeros(track.length, dtype=bool)
        left = 0
        for i in range(track.length):
            if left == 0 and rng.random() < noise.burst_prob:
                left = int(rng.choice(_BURST_FRAMES))
            if left > 0:
                mask[i] = True
                left -= 1
        masks[track.agent_id] = mask
    return masks


def corrupt_to_detections(tracks: list[AgentTrack], noise: NoiseConfig,
                          seed: int = 0, num_frames: int | None = None,
                          frame_rate: float = 10.0) -> WorldLog:
    """Run the ground truth through the detector-noise channel."""
    if num_frames is None:
        num_frames = max(t.death_frame for t in tracks) + 1 if tracks else 0
    rng = substream(seed, "world-noise")
    bursts = _burst_masks(tracks, noise, rng)

    frames: list[list[Detection]] = []
    true_ids: list[np.ndarray] = []
    for t in range(num_frames):
        dets: list[Detection] = []
        ids: list[int] = []
        live = [tr for tr in tracks if tr.alive(t)]
        for tr in live:
            i = tr.index_at(t)
            if rng.random() < noise.miss_rate:
                continue
            pos_sigma = noise.pos_sigma * (_BURST_POS_FACTOR
                                           if bursts[tr.agent_id][i] else 1.0)
            pos = tr.pos[i] + rng.normal(0.0, pos_sigma, size=2)
            velo = tr.velo[i] + rng.normal(0.0, noise.velo_sigma, size=2)
            dh = rng.normal(0.0, noise.heading_sigma)
            # skip the wrap when unperturbed so zero noise is exactly transparent
            heading = float(_wrap_angle(tr.heading[i] + dh)) if dh else float(tr.heading[i])
            size = np.maximum(tr.size[i] + rng.normal(0.0, noise.size_sigma, size=3),
                              0.2)
            score = float(np.clip(rng.normal(noise.score_tp_mean, noise.score_sigma),
                                  1e-4, 1.0 - 1e-4))
            dets.append(Detection(pos=(float(pos[0]), float(pos[1])),
                                  velo=(float(velo[0]), float(velo[1])),
                                  size=tuple(float(s) for s in size),
                                  heading=heading, score=score, frame=t,
                                  local_index=len(dets)))
            ids.append(tr.agent_id)

        if live and noise.fp_rate > 0:
            for _ in range(int(rng.poisson(noise.fp_rate))):
                host = live[int(rng.integers(len(live)))]
                i = host.index_at(t)
                pos = host.pos[i] + rng.normal(0.0, noise.fp_cluster_sigma, size=2)
                velo = host.velo[i] + rng.normal(0.0, noise.velo_sigma, size=2)
                heading = float(_wrap_angle(host.heading[i]
                                            + rng.normal(0.0, noise.heading_sigma)))
                size = np.maximum(host.size[i]
                                  + rng.normal(0.0, noise.size_sigma, size=3), 0.2)
                score = float(np.clip(rng.normal(noise.score_fp_mean,
                                                 noise.score_sigma),
                                      1e-4, 1.0 - 1e-4))
                dets.append(Detection(pos=(float(pos[0]), float(pos[1])),
                                      velo=(float(velo[0]), float(velo[1])),
                                      size=tuple(float(s) for s in size),
                                      heading=heading, score=score, frame=t,
                                      local_index=len(dets)))
                ids.append(FP_ID)

        frames.append(dets)
        true_ids.append(np.array(ids, dtype=int))
    return WorldLog(frame_rate=frame_rate, tracks=tracks, frames=frames,
                    true_ids=true_ids, rng_seed=seed)


def make_affinity_labels(log: WorldLog, t: int,
                         theta_d: float) -> tuple[np.ndarray, np.ndarray]:
    """Binary same-identity labels over the gated pairs of frames t-1 and t.

    A pair is positive iff both detections are true positives of the same
    agent; false positives never match anything, including each other.
    """
    if t < 1 or t >= log.num_frames:
        raise ConfigError(f"make_affinity_labels: need frames {t - 1} and {t}")
    prev_pos = np.array([d.pos for d in log.frames[t - 1]]).reshape(-1, 2)
    curr_pos = np.array([d.pos for d in log.frames[t]]).reshape(-1, 2)
    pairs, _ = gate_positions(prev_pos, curr_pos, theta_d)
    ids_prev = log.true_ids[t - 1]
    ids_curr = log.true_ids[t]
    labels = np.zeros(len(pairs))
    for k, (m, n) in enumerate(pairs):
        if ids_prev[m] != FP_ID and ids_prev[m] == ids_curr[n]:
            labels[k] = 1.0
    return pairs, labels


# ---- JSONL serialization -----------------------------------------------------


def save_world(log: WorldLog, path) -> None:
    """One JSON object per line: a world header, agent lines, frame lines."""
    path = Path(path)
    with open(path, "w") as f:
        f.write(json.dumps({"type": "world", "frame_rate": log.frame_rate,
                            "rng_seed": log.rng_seed,
                            "num_frames": log.num_frames}) + "\n")
        for tr in log.tracks:
            f.write(json.dumps({
                "type": "agent", "agent_id": tr.agent_id,
                "birth_frame": tr.birth_frame, "death_frame": tr.death_frame,
                "pos": tr.pos.tolist(), "velo": tr.velo.tolist(),
                "heading": tr.heading.tolist(), "size": tr.size.tolist(),
            }) + "\n")
        for t, dets in enumerate(log.frames):
            recs = []
            for i, d in enumerate(dets):
                rec = {"pos": list(d.pos), "velo": list(d.velo),
                       "size": list(d.size), "heading": d.heading,
                       "score": d.score}
                if len(log.true_ids) > t:
                    tid = int(log.true_ids[t][i])
                    rec["true_id"] = "FP" if tid == FP_ID else tid
                recs.append(rec)
            f.write(json.dumps({"type": "frame", "frame": t,
                                "detections": recs}) + "\n")


def load_world(path) -> WorldLog:
    path = Path(path)
    frame_rate, rng_seed, num_frames = 10.0, 0, None
    tracks: list[AgentTrack] = []
    frame_map: dict[int, list[Detection]] = {}
    ids_map: dict[int, np.ndarray] = {}
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{line_no}: bad JSON ({e})") from e
            kind = rec.get("type")
            if kind == "world":
                frame_rate = float(rec["frame_rate"])
                rng_seed = int(rec.get("rng_seed", 0))
                num_frames = rec.get("num_frames")
            elif kind == "agent":
                tracks.append(AgentTrack(
                    agent_id=int(rec["agent_id"]),
                    birth_frame=int(rec["birth_frame"]),
                    death_frame=int(rec["death_frame"]),
                    pos=np.array(rec["pos"], dtype=float),
                    velo=np.array(rec["velo"], dtype=float),
                    heading=np.array(rec["heading"], dtype=float),
                    size=np.array(rec["size"], dtype=float)))
            elif kind == "frame":
                t = int(rec["frame"])
                dets, ids = [], []
                for i, r in enumerate(rec["detections"]):
                    dets.append(Detection(pos=tuple(r["pos"]),
                                          velo=tuple(r["velo"]),
                                          size=tuple(r["size"]),
                                          heading=float(r["heading"]),
                                          score=float(r["score"]),
                                          frame=t, local_index=i))
                    tid = r.get("true_id", "FP")
                    ids.append(FP_ID if tid == "FP" else int(tid))
                frame_map[t] = dets
                ids_map[t] = np.array(ids, dtype=int)
            else:
                raise ConfigError(f"{path}:{line_no}: unknown line type {kind!r}")
    if num_frames is None:
        num_frames = max(frame_map) + 1 if frame_map else 0
    frames = [frame_map.get(t, []) for t in range(num_frames)]
    true_ids = [ids_map.get(t, np.zeros(0, dtype=int)) for t in range(num_frames)]
    return WorldLog(frame_rate=frame_rate, tracks=tracks, frames=frames,
                    true_ids=true_ids, rng_seed=rng_seed)
