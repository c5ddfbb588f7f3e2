"""Turn tracks into network inputs: per-person RGB clips, background-zeroed
(BS) clips, and motion history images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .motionseg import to_gray
from .tracking import Track
from .videoio import Clip, resize_bilinear


@dataclass
class PersonSequence:
    track_id: int
    rgb: Clip            # T x C x S x S
    bs: Clip             # same shape, background zeroed by the person mask
    frame_span: tuple[int, int]


@dataclass
class MhiImage:
    values: np.ndarray   # H x W in [0, 1]
    tau: int


class InsufficientFramesError(ValueError):
    pass


def crop_box(frame: np.ndarray, box) -> np.ndarray:
    """Crop (C, H, W) at an (x, y, w, h) box, zero-padding outside the frame."""
    x, y, w, h = (int(round(v)) for v in box)
    c, fh, fw = frame.shape
    out = np.zeros((c, h, w), dtype=frame.dtype)
    sy0, sy1 = max(0, y), min(fh, y + h)
    sx0, sx1 = max(0, x), min(fw, x + w)
    if sy0 < sy1 and sx0 < sx1:
        out[:, sy0 - y : sy1 - y, sx0 - x : sx1 - x] = frame[:, sy0:sy1, sx0:sx1]
    return out


def extract_person_sequence(video: Clip, track: Track,
                            masks: dict[int, np.ndarray] | None = None,
                            out_size: int = 64,
                            min_clip_frames: int = 2) -> PersonSequence | None:
    """Per-frame crop of the track box, resized to out_size; bs = rgb * mask.

    masks maps frame index -> binary H x W foreground mask; frames without a
    mask get an all-zero bs crop. Returns None (skipped) for short tracks.
    """
    if len(track.states) < min_clip_frames:
        return None
    rgb_frames, bs_frames = [], []
    for frame_index, box in track.states:
        frame = video.frames[frame_index]
        crop = crop_box(frame, box)
        rgb_frames.append(resize_bilinear(crop, out_size, out_size))
        if masks is not None and frame_index in masks:
            mask_crop = crop_box(masks[frame_index][None].astype(frame.dtype), box)
            masked = crop * mask_crop
        else:
            masked = np.zeros_like(crop)
        bs_frames.append(resize_bilinear(masked, out_size, out_size))
    span = (track.states[0][0], track.states[-1][0])
    rgb = Clip(np.stack(rgb_frames), fps=video.fps,
               source_id=f"{video.source_id}/track{track.id}",
               start_frame=span[0])
    bs = Clip(np.stack(bs_frames), fps=video.fps,
              source_id=rgb.source_id, start_frame=span[0])
    return PersonSequence(track_id=track.id, rgb=rgb, bs=bs, frame_span=span)


def compute_mhi(bs: Clip, tau: int = 16, threshold: float = 0.05) -> MhiImage:
    """Motion history image of a clip, linear decay normalized to [0, 1].

    H_t = 1 where |frame_t - frame_{t-1}| > threshold, else
    max(0, H_{t-1} - 1/tau); the last H is returned.
    """
    if bs.num_frames < 2:
        raise InsufficientFramesError(
            f"MHI needs at least 2 frames, got {bs.num_frames}")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    gray = np.stack([to_gray(f) for f in bs.frames])
    # Counted in whole frames and normalized at the end, so full decay is
    # exactly zero.
    h = np.zeros(gray.shape[1:], dtype=np.float64)
    for t in range(1, gray.shape[0]):
        moving = np.abs(gray[t] - gray[t - 1]) > threshold
        h = np.where(moving, float(tau), np.maximum(0.0, h - 1.0))
    return MhiImage(values=h / tau, tau=tau)


def subsample_time(clip: Clip, target_t: int) -> Clip:
    """Pick target_t frames at indices round(i*(T-1)/(target_t-1)).

    Endpoints are preserved bitwise. Clips shorter than target_t are padded
    by repeating the last frame.
    """
    if target_t < 1:
        raise ValueError("target_t must be >= 1")
    t = clip.num_frames
    if t < target_t:
        pad = np.repeat(clip.frames[-1:], target_t - t, axis=0)
        frames = np.concatenate([clip.frames, pad])
    elif target_t == 1:
        frames = clip.frames[:1].copy()
    else:
        idx = np.round(np.arange(target_t) * (t - 1) / (target_t - 1)).astype(int)
        frames = clip.frames[idx].copy()
    return Clip(frames, fps=clip.fps, source_id=clip.source_id,
                start_frame=clip.start_frame)
