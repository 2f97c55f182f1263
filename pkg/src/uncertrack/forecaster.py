"""Trajectory decoding, the social-interaction plug-in, the joint loss, and
the training loop.

The decoder emits per-step offsets from the detection's position at the last
observed frame (so an all-zero decoder forecasts "stand still").  Training
minimizes smooth-L1 on the final-frame forecasts of true-positive detections
plus a lambda-weighted mean of the per-transition affinity BCE, with lambda
decayed linearly over the first half of the epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .detections import FrameArrays
from .encoder import SequenceEncoding, encode_sequence
from .errors import ConfigError
from .model import (ModelConfig, ModelParams, init_model, variant_config)
from .numerics import SCORE_EPS, NumericsError, Tape, Var, adam_step, mlp_forward
from .rng import substream
from .world import FP_ID, WorldLog

__all__ = ["Forecast", "TrainConfig", "SequenceSample", "EpochStats",
           "IdentitySIM", "MeanPoolSIM", "sim_apply", "decode_trajectory",
           "total_loss", "lambda_schedule", "lr_schedule", "augment_sample",
           "build_sample", "window_starts", "sequence_labels", "train",
           "forecast_sequence", "parse_config_file", "model_config_from_train"]


@dataclass
class Forecast:
    curr_index: int
    waypoints: np.ndarray   # (pred_steps, 2) absolute positions, meters
    frame_interval: float   # seconds between waypoints


# ---- social interaction plug-in ----------------------------------------------


class IdentitySIM:
    """Default no-op social module: p_n = h_n, bitwise."""

    def __call__(self, tape: Tape, encodings: Var, positions: np.ndarray) -> Var:
        return encodings


class MeanPoolSIM:
    """Demo SIM: subtract the mean encoding of neighbors within a radius.

    Permutation-equivariant by construction; detections with no neighbors are
    left unchanged.
    """

    def __init__(self, radius: float = 10.0):
        self.radius = radius

    def __call__(self, tape: Tape, encodings: Var, positions: np.ndarray) -> Var:
        n = positions.shape[0]
        if n == 0:
            return encodings
        diff = positions[:, None, :] - positions[None, :, :]
        near = (diff * diff).sum(axis=2) <= self.radius * self.radius
        np.fill_diagonal(near, False)
        weights = np.zeros((n, n))
        deg = near.sum(axis=1)
        rows = deg > 0
        weights[rows] = near[rows] / deg[rows, None]
        return tape.sub(encodings, tape.matmul(tape.const(weights), encodings))


def sim_apply(tape: Tape, sim, encodings: Var, positions: np.ndarray) -> Var:
    """Run the configured social-interaction transform (identity when None)."""
    if sim is None:
        return encodings
    return sim(tape, encodings, positions)


# ---- decoding ------------------------------------------------------------------


def decode_trajectory(tape: Tape, params: ModelParams, p_n: Var,
                      positions: np.ndarray) -> tuple[Var, list[Forecast]]:
    """Decode per-step offsets and assemble absolute waypoint forecasts."""
    offsets = mlp_forward(tape, params.mlp_dec, p_n)
    steps = params.config.pred_steps
    forecasts = []
    for n in range(positions.shape[0]):
        way = positions[n][None, :] + offsets.value[n].reshape(steps, 2)
        forecasts.append(Forecast(curr_index=n, waypoints=way,
                                  frame_interval=params.config.step_seconds))
    return offsets, forecasts


# ---- loss ----------------------------------------------------------------------


def sequence_labels(transitions, true_ids) -> list[np.ndarray]:
    """Same-identity labels aligned with each transition's gated pairs."""
    labels = []
    for rec in transitions:
        ids_prev = true_ids[rec.frame - 1]
        ids_curr = true_ids[rec.frame]
        if len(rec.pairs) == 0:
            labels.append(np.zeros(0))
            continue
        prev = ids_prev[rec.pairs[:, 0]]
        curr = ids_curr[rec.pairs[:, 1]]
        labels.append(((prev != FP_ID) & (prev == curr)).astype(float))
    return labels


def total_loss(tape: Tape, pred_offsets: Var, target_offsets: np.ndarray,
               target_mask: np.ndarray, transitions, labels: list[np.ndarray],
               lam: float, t_obs: int, beta: float = 1.0):
    """Joint matching/forecasting loss for one sequence.

    Returns (loss Var, l_traj value, l_aff value).  Raises on a degenerate
    sequence with neither supervised forecasts nor gated pairs.
    """
    terms = []
    l_traj_val = 0.0
    matched = np.flatnonzero(target_mask.sum(axis=1) > 0)
    if len(matched):
        pred = tape.gather_rows(pred_offsets, matched)
        l_traj = tape.smooth_l1(pred, target_offsets[matched], beta,
                                weights=target_mask[matched])
        terms.append(l_traj)
        l_traj_val = float(l_traj.value[0, 0])

    aff_sum = None
    for rec, lab in zip(transitions, labels):
        if len(lab) == 0:
            continue
        clamped = tape.clamp(rec.scores, SCORE_EPS, 1.0 - SCORE_EPS)
        term = tape.bce(clamped, lab[:, None])
        aff_sum = term if aff_sum is None else tape.add(aff_sum, term)
    l_aff_val = 0.0
    if aff_sum is not None:
        l_aff = tape.affine(aff_sum, 1.0 / (t_obs - 1))
        l_aff_val = float(l_aff.value[0, 0])
        terms.append(tape.affine(l_aff, lam))

    if not terms:
        raise ConfigError("degenerate sequence: no supervised forecasts and "
                          "no gated pairs")
    loss = terms[0]
    for t in terms[1:]:
        loss = tape.add(loss, t)
    return loss, l_traj_val, l_aff_val


# ---- schedules -----------------------------------------------------------------


def lambda_schedule(epoch: int, total_epochs: int, lambda_start: float = 1.0,
                    lambda_end: float = 0.1) -> float:
    """Linear decay over the first half of training, then constant."""
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})")
    half = math.ceil(total_epochs / 2)
    if epoch >= half:
        return lambda_end
    return lambda_start + (lambda_end - lambda_start) * epoch / half


def lr_schedule(epoch: int, total_epochs: int, base_lr: float = 0.003,
                decay: float = 0.6, num_decays: int = 6) -> float:
    """Step decay at evenly spaced epoch boundaries."""
    boundaries = [math.ceil(total_epochs * i / (num_decays + 1))
                  for i in range(1, num_decays + 1)]
    k = sum(epoch >= b for b in boundaries)
    return base_lr * decay ** k


# ---- samples and augmentation ----------------------------------------------------


@dataclass
class SequenceSample:
    frames: list[FrameArrays]
    true_ids: list[np.ndarray]
    target_offsets: np.ndarray   # (N_T, 2 * pred_steps), GT future minus det pos
    target_mask: np.ndarray      # (N_T, 2 * pred_steps) in {0, 1}


def window_starts(log: WorldLog, t_obs: int, pred_steps: int,
                  step_seconds: float) -> int:
    """Number of admissible window start frames (full horizon in-world)."""
    stride = int(round(log.frame_rate * step_seconds))
    horizon = pred_steps * stride
    return max(0, log.num_frames - t_obs - horizon + 1)


def build_sample(log: WorldLog, t0: int, t_obs: int, config: ModelConfig,
                 max_detections: int = 100) -> SequenceSample:
    """Cut one observation window and its forecasting targets from a world."""
    stride = int(round(log.frame_rate * config.step_seconds))
    frames, ids = [], []
    for t in range(t0, t0 + t_obs):
        dets = log.frames[t]
        tid = log.true_ids[t]
        if len(dets) > max_detections:  # keep the detector's most confident
            order = np.argsort([-d.score for d in dets])[:max_detections]
            order.sort()
            dets = [dets[i] for i in order]
            tid = tid[order]
        frames.append(FrameArrays.from_detections(dets))
        ids.append(tid)

    t_final = t0 + t_obs - 1
    n_final = len(frames[-1])
    steps = config.pred_steps
    offsets = np.zeros((n_final, 2 * steps))
    mask = np.zeros((n_final, 2 * steps))
    by_id = {tr.agent_id: tr for tr in log.tracks}
    for n in range(n_final):
        tid = int(ids[-1][n])
        if tid == FP_ID:
            continue
        tr = by_id[tid]
        for i in range(steps):
            f = t_final + stride * (i + 1)
            if f > tr.death_frame:
                break  # shorter ground truth: supervise the valid fragment
            gt = tr.pos[tr.index_at(f)]
            offsets[n, 2 * i: 2 * i + 2] = gt - frames[-1].pos[n]
            mask[n, 2 * i: 2 * i + 2] = 1.0
    return SequenceSample(frames=frames, true_ids=ids, target_offsets=offsets,
                          target_mask=mask)


def _rotate_frames(frames, angle):
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, s], [-s, c]])  # row vectors: p @ rot = R p
    out = []
    for f in frames:
        out.append(FrameArrays(pos=f.pos @ rot, velo=f.velo @ rot,
                               size=f.size.copy(),
                               heading=np.mod(f.heading + angle + np.pi,
                                              2 * np.pi) - np.pi,
                               score=f.score.copy()))
    return out


def _flip_frames(frames):
    out = []
    for f in frames:
        out.append(FrameArrays(pos=f.pos * np.array([1.0, -1.0]),
                               velo=f.velo * np.array([1.0, -1.0]),
                               size=f.size.copy(), heading=-f.heading,
                               score=f.score.copy()))
    return out


def augment_sample(sample: SequenceSample, rng: np.random.Generator) -> SequenceSample:
    """One random rotation plus an independent 50% flip across the x axis."""
    angle = float(rng.uniform(0.0, 2 * np.pi))
    do_flip = bool(rng.random() < 0.5)
    frames = _rotate_frames(sample.frames, angle)
    steps = sample.target_offsets.shape[1] // 2
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, s], [-s, c]])
    off = sample.target_offsets.reshape(-1, steps, 2) @ rot
    if do_flip:
        frames = _flip_frames(frames)
        off = off * np.array([1.0, -1.0])
    return SequenceSample(frames=frames, true_ids=sample.true_ids,
                          target_offsets=off.reshape(-1, 2 * steps),
                          target_mask=sample.target_mask.copy())


# ---- training ------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Desk-scale defaults; ``paper_preset`` restores the reference settings."""

    batch_sequences: int = 16
    max_detections: int = 100
    t_obs: int = 20
    k_candidates: int = 10
    theta_d: float = 10.0
    hidden_dim: int = 64
    det_dim: int = 64
    mov_dim: int = 32
    lr: float = 0.003
    lr_decay: float = 0.6
    lr_num_decays: int = 6
    epochs: int = 10
    lambda_start: float = 1.0
    lambda_end: float = 0.1
    seed: int = 0
    augmentation: bool = True
    windows_per_world: int = 4
    smooth_l1_beta: float = 1.0

    @classmethod
    def paper_preset(cls) -> "TrainConfig":
        return cls(batch_sequences=128, epochs=20)


def parse_config_file(path) -> TrainConfig:
    """key=value lines, '#' comments; keys match TrainConfig field names."""
    spec = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    with open(path) as f:
        for line_no, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, "
                                  f"got {raw.strip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in spec:
                raise ConfigError(f"{path}:{line_no}: unknown key '{key}'")
            values[key] = _coerce(key, val, spec[key], path, line_no)
    return TrainConfig(**values)


def _coerce(key, val, typ, path, line_no):
    try:
        if typ in ("int", int):
            return int(val)
        if typ in ("float", float):
            return float(val)
        if typ in ("bool", bool):
            if val.lower() in ("true", "1", "yes", "on"):
                return True
            if val.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(val)
        return val
    except ValueError as e:
        raise ConfigError(f"{path}:{line_no}: bad value for '{key}': {val!r}") from e


def model_config_from_train(cfg: TrainConfig, variant: str = "full") -> ModelConfig:
    base = ModelConfig(det_dim=cfg.det_dim, mov_dim=cfg.mov_dim,
                       hidden_dim=cfg.hidden_dim, k_candidates=cfg.k_candidates,
                       theta_d=cfg.theta_d)
    return variant_config(variant, base)


@dataclass
class EpochStats:
    epoch: int
    l_traj: float
    l_aff: float
    lam: float
    lr: float


def _sequence_loss(tape, params, sample, lam, t_obs, beta, sim):
    enc = encode_sequence(tape, params, sample.frames)
    p_n = sim_apply(tape, sim, enc.h_mot_final, sample.frames[-1].pos)
    offsets = mlp_forward(tape, params.mlp_dec, p_n)
    labels = sequence_labels(enc.transitions, sample.true_ids)
    return total_loss(tape, offsets, sample.target_offsets, sample.target_mask,
                      enc.transitions, labels, lam, t_obs, beta)


def train(cfg: TrainConfig, worlds: list[WorldLog], variant: str = "full",
          sim=None, progress=None) -> tuple[ModelParams, list[EpochStats]]:
    """Full training loop; deterministic for a fixed (cfg, worlds, variant)."""
    model_cfg = model_config_from_train(cfg, variant)
    starts_per_world = [window_starts(w, cfg.t_obs, model_cfg.pred_steps,
                                      model_cfg.step_seconds) for w in worlds]
    total_windows = sum(cfg.windows_per_world for s in starts_per_world if s > 0)
    if total_windows < cfg.batch_sequences:
        raise ConfigError(f"training needs at least {cfg.batch_sequences} "
                          f"sequences per epoch, worlds offer {total_windows}")

    params = init_model(model_cfg, cfg.seed)
    order_rng = substream(cfg.seed, "batch-order")
    aug_rng = substream(cfg.seed, "augment")

    history: list[EpochStats] = []
    step = 0
    for epoch in range(cfg.epochs):
        lam = lambda_schedule(epoch, cfg.epochs, cfg.lambda_start, cfg.lambda_end)
        lr = lr_schedule(epoch, cfg.epochs, cfg.lr, cfg.lr_decay,
                         cfg.lr_num_decays)
        windows = []
        for wi, n_starts in enumerate(starts_per_world):
            if n_starts <= 0:
                continue
            for t0 in order_rng.integers(0, n_starts, size=cfg.windows_per_world):
                windows.append((wi, int(t0)))
        order_rng.shuffle(windows)

        traj_sum = aff_sum = 0.0
        traj_n = aff_n = 0
        for lo in range(0, len(windows), cfg.batch_sequences):
            batch = windows[lo: lo + cfg.batch_sequences]
            for wi, t0 in batch:
                sample = build_sample(worlds[wi], t0, cfg.t_obs, model_cfg,
                                      cfg.max_detections)
                if cfg.augmentation:
                    sample = augment_sample(sample, aug_rng)
                tape = Tape()
                loss, l_traj, l_aff = _sequence_loss(
                    tape, params, sample, lam, cfg.t_obs, cfg.smooth_l1_beta, sim)
                value = float(loss.value[0, 0])
                if not np.isfinite(value):
                    raise NumericsError(
                        f"non-finite loss at epoch {epoch}, window (world "
                        f"{wi}, t0 {t0}): traj {l_traj}, aff {l_aff}")
                tape.backward(loss, seed=1.0 / len(batch))
                if l_traj:
                    traj_sum += l_traj
                    traj_n += 1
                aff_sum += l_aff
                aff_n += 1
            step += 1
            adam_step(params.blocks(), lr=lr, step=step)

        stats = EpochStats(epoch=epoch,
                           l_traj=traj_sum / traj_n if traj_n else 0.0,
                           l_aff=aff_sum / aff_n if aff_n else 0.0,
                           lam=lam, lr=lr)
        history.append(stats)
        if progress is not None:
            progress(stats)
    return params, history


def forecast_sequence(params: ModelParams, frames: list[FrameArrays],
                      sim=None) -> tuple[SequenceEncoding, list[Forecast]]:
    """Inference: encode a window and decode forecasts for its final frame."""
    tape = Tape()
    enc = encode_sequence(tape, params, frames)
    p_n = sim_apply(tape, sim, enc.h_mot_final, frames[-1].pos)
    _, forecasts = decode_trajectory(tape, params, p_n, frames[-1].pos)
    return enc, forecasts
