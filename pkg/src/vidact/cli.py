"""Command-line front door for the whole pipeline.

Subcommands: gen-data, pack, train, eval, recognize (surveillance mode),
classify (whole-video mode), summarize. Exit codes: 0 success, 1 internal
error, 2 user/config error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import motionseg, synth
from .config import ConfigError, PipelineConfig, load_config
from .kcf import KcfConfig
from .network import (NetworkSpec, TrainConfig, build_network, evaluate,
                      load_checkpoint, predict, save_checkpoint, train)
from .sequences import compute_mhi, extract_person_sequence, subsample_time
from .summarize import (Subject, Summary, build_person_timeline,
                        build_shot_timeline, export, smooth_predictions,
                        summary_from_json)
from .tracking import MultiTracker, dump_tracks
from .videoio import (SPLIT_PRESETS, Clip, ClipArchive, load_frame_dir,
                      pack_clip_archive, read_clip_archive, resize_clip,
                      segment_into_clips, split_dataset, write_pnm)


class UserError(Exception):
    """Problems the user can fix (missing files, bad flags)."""


# -- shared helpers ----------------------------------------------------------


def network_spec(cfg: PipelineConfig, variant: str) -> NetworkSpec:
    if variant == "mhi":
        return NetworkSpec(mode="2d",
                           input_shape=(1, cfg.input_size, cfg.input_size),
                           encoder_channels=cfg.channels("enc"),
                           head_channels=cfg.channels("head"),
                           fc_width=cfg.fc_width, num_classes=cfg.num_classes)
    return NetworkSpec(mode="3d",
                       input_shape=(3, cfg.input_frames, cfg.input_size,
                                    cfg.input_size),
                       encoder_channels=cfg.channels("enc"),
                       head_channels=cfg.channels("head"),
                       fc_width=cfg.fc_width, num_classes=cfg.num_classes)


def clip_to_input(clip: Clip, cfg: PipelineConfig, variant: str) -> np.ndarray:
    """One clip -> one network input sample."""
    clip = resize_clip(clip, cfg.input_size, cfg.input_size)
    if variant == "mhi":
        if clip.frames.shape[1] == 1 and clip.num_frames == 1:
            return clip.frames[0].astype(np.float32)      # pre-computed MHI
        mhi = compute_mhi(clip, tau=cfg.mhi_tau, threshold=cfg.mhi_threshold)
        return mhi.values[None].astype(np.float32)
    clip = subsample_time(clip, cfg.input_frames)
    return np.transpose(clip.frames, (1, 0, 2, 3)).astype(np.float32)


def archive_to_arrays(archive: ClipArchive, cfg: PipelineConfig,
                      variant: str) -> tuple[np.ndarray, np.ndarray]:
    xs = [clip_to_input(c, cfg, variant) for c in archive.clips]
    return np.stack(xs), np.asarray(archive.labels, dtype=np.int64)


def derive_bs(clip: Clip, cfg: PipelineConfig) -> Clip:
    """Background-zeroed variant via a temporal-median background model."""
    gray = np.stack([motionseg.to_gray(f) for f in clip.frames])
    model = motionseg.BackgroundModel(*gray.shape[1:], alpha=cfg.bg_alpha,
                                      threshold=cfg.bg_threshold)
    model.seed(np.median(gray, axis=0))
    frames = np.empty_like(clip.frames)
    for t in range(clip.num_frames):
        mask = model.foreground_mask(gray[t])
        mask = motionseg.morph(mask, "close", cfg.morph_radius)
        frames[t] = clip.frames[t] * mask[None]
    return Clip(frames, fps=clip.fps, source_id=clip.source_id,
                start_frame=clip.start_frame)


def shot_boundaries(video: Clip, threshold: float) -> list[int]:
    """Frames where mean |frame difference| spikes above the threshold."""
    diffs = np.mean(np.abs(np.diff(video.frames, axis=0)), axis=(1, 2, 3))
    bounds = [int(t) + 1 for t in np.nonzero(diffs > threshold)[0]]
    # Collapse runs of adjacent spikes to the first frame of each.
    out = []
    for b in bounds:
        if not out or b > out[-1] + 1:
            out.append(b)
    return out


def _load_checkpoint_or_die(cfg: PipelineConfig):
    if not cfg.checkpoint:
        raise UserError("no checkpoint configured (set checkpoint=...)")
    if not Path(cfg.checkpoint).exists():
        raise UserError(f"checkpoint not found: {cfg.checkpoint}")
    network, _, _, _ = load_checkpoint(cfg.checkpoint)
    return network


# -- subcommands -------------------------------------------------------------


def cmd_gen_data(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clips, labels = synth.make_action_dataset(
        args.clips_per_class, num_frames=args.frames, canvas=cfg.input_size,
        seed=cfg.seed)
    rgb = ClipArchive(label_names=list(synth.ACTIONS), clips=clips,
                      labels=labels)
    pack_clip_archive(rgb, out / "rgb.a3dc")
    bs_clips, mhi_clips = [], []
    for clip in clips:
        bs = derive_bs(clip, cfg)
        bs_clips.append(bs)
        mhi = compute_mhi(bs, tau=cfg.mhi_tau, threshold=cfg.mhi_threshold)
        mhi_clips.append(Clip(mhi.values[None, None].astype(np.float32),
                              fps=clip.fps, source_id=clip.source_id))
    pack_clip_archive(ClipArchive(list(synth.ACTIONS), bs_clips, labels),
                      out / "bs.a3dc")
    pack_clip_archive(ClipArchive(list(synth.ACTIONS), mhi_clips, labels),
                      out / "mhi.a3dc")
    print(f"wrote {len(clips)} clips per variant to {out}")
    return 0


def cmd_pack(cfg: PipelineConfig, args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise UserError(f"not a directory: {root}")
    label_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not label_dirs:
        raise UserError(f"{root}: no label subdirectories")
    names = [p.name for p in label_dirs]
    archive = ClipArchive(label_names=names)
    for li, label_dir in enumerate(label_dirs):
        for clip_dir in sorted(p for p in label_dir.iterdir() if p.is_dir()):
            archive.clips.append(load_frame_dir(clip_dir, fps=cfg.fps))
            archive.labels.append(li)
    pack_clip_archive(archive, args.output)
    print(f"packed {len(archive)} clips, {len(names)} labels -> {args.output}")
    return 0


def _split_archive(archive: ClipArchive, cfg: PipelineConfig):
    if cfg.split not in SPLIT_PRESETS:
        raise UserError(f"unknown split preset {cfg.split!r}")
    idx = list(range(len(archive)))
    return split_dataset(idx, archive.labels, SPLIT_PRESETS[cfg.split],
                         cfg.seed)


def cmd_train(cfg: PipelineConfig, args) -> int:
    archive = read_clip_archive(args.data)
    if cfg.num_classes < len(archive.label_names):
        raise UserError(f"archive has {len(archive.label_names)} labels but "
                        f"num_classes={cfg.num_classes}")
    variant = cfg.input_variant
    x, y = archive_to_arrays(archive, cfg, variant)
    tr, va, te = _split_archive(archive, cfg)
    print(f"split {cfg.split}: train={len(tr)} val={len(va)} test={len(te)}")
    spec = network_spec(cfg, variant)
    network = build_network(spec, seed=cfg.seed)
    tc = TrainConfig(lr=cfg.lr, batch=cfg.batch, epochs=cfg.epochs,
                     seed=cfg.seed, split_preset=cfg.split,
                     early_stop_acc=cfg.early_stop_acc)
    history = train(network, x[tr], y[tr], tc, x_val=x[va], y_val=y[va],
                    log=print)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = cfg.checkpoint or str(out / f"{variant}.a3dw")
    save_checkpoint(network, ckpt, epoch=len(history), history=history)
    with open(out / f"metrics_{variant}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "loss", "accuracy"])
        for rec in history:
            writer.writerow([rec["epoch"], "train",
                             f"{rec['train_loss']:.6f}",
                             f"{rec['train_acc']:.6f}"])
            if "val_acc" in rec:
                writer.writerow([rec["epoch"], "val", "",
                                 f"{rec['val_acc']:.6f}"])
    if te:
        acc, _ = evaluate(network, x[te], y[te], cfg.batch)
        print(f"test accuracy: {acc:.4f}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(cfg: PipelineConfig, args) -> int:
    network = _load_checkpoint_or_die(cfg)
    archive = read_clip_archive(args.data)
    variant = "mhi" if network.spec.mode == "2d" else cfg.input_variant
    x, y = archive_to_arrays(archive, cfg, variant)
    if args.test_split_only:
        _, _, te = _split_archive(archive, cfg)
        x, y = x[te], y[te]
    acc, confusion = evaluate(network, x, y, cfg.batch)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "confusion.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + archive.label_names)
        for name, row in zip(archive.label_names, confusion):
            writer.writerow([name] + [int(v) for v in row])
    print(f"accuracy: {acc:.4f} over {len(x)} clips")
    return 0


def _predict_windows(network, windows, cfg: PipelineConfig, variant: str):
    xs = np.stack([clip_to_input(w, cfg, variant) for w in windows])
    return predict(network, xs, cfg.batch)


def cmd_recognize(cfg: PipelineConfig, args) -> int:
    network = _load_checkpoint_or_die(cfg)
    variant = "mhi" if network.spec.mode == "2d" else cfg.input_variant
    video = load_frame_dir(args.input, fps=cfg.fps)
    labels = read_clip_archive(args.labels).label_names if args.labels \
        else [f"class{i}" for i in range(network.spec.num_classes)]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    gray = np.stack([motionseg.to_gray(f) for f in video.frames])
    model = motionseg.BackgroundModel(*gray.shape[1:], alpha=cfg.bg_alpha,
                                      threshold=cfg.bg_threshold)
    model.seed(gray[0])
    tracker = MultiTracker(iou_threshold=cfg.iou_threshold,
                           max_miss=cfg.max_miss, min_area=cfg.min_area,
                           kcf_config=KcfConfig(patch_size=cfg.kcf_patch,
                                                sigma=cfg.kcf_sigma,
                                                lambda_=cfg.kcf_lambda,
                                                interp=cfg.kcf_interp))
    masks: dict[int, np.ndarray] = {}
    debug_dir = Path(cfg.debug_dir) if cfg.debug_dir else None
    if debug_dir:
        debug_dir.mkdir(parents=True, exist_ok=True)
    for t in range(video.num_frames):
        detections, mask = motionseg.detect_people(
            model, gray[t], min_area=cfg.min_area,
            morph_radius=cfg.morph_radius, frame_index=t)
        masks[t] = mask
        if debug_dir:
            write_pnm(debug_dir / f"mask_{t:06d}.pgm",
                      (mask * 255).astype(np.uint8))
        if t >= cfg.warmup_frames:
            tracker.step(video.frames[t], detections, t)
        model.update_masked(gray[t], mask)

    tracks = tracker.all_tracks()
    dump_tracks(tracks, out / "tracks.jsonl")
    summary = Summary(video_id=str(args.input), fps=video.fps, labels=labels)
    win = max(2, round(video.fps * cfg.clip_seconds))
    for track in tracks:
        seq = extract_person_sequence(video, track, masks,
                                      out_size=cfg.input_size)
        if seq is None:
            print(f"track {track.id}: too short, skipped")
            continue
        source = seq.bs if variant == "bs" else seq.rgb if variant == "rgb" \
            else seq.bs
        windows = segment_into_clips(source, cfg.clip_seconds,
                                     cfg.stride_seconds)
        if not windows:
            windows = [source]   # short track: one window, padded later
        preds, confs = _predict_windows(network, windows, cfg, variant)
        preds = smooth_predictions(preds, cfg.smooth_window)
        spans = [(w.start_frame, min(w.start_frame + win,
                                     seq.frame_span[1] + 1))
                 for w in windows]
        events = build_person_timeline(preds, confs, spans, labels)
        summary.subjects.append(Subject(id=track.id, kind="person",
                                        events=events))
    export(summary, "json", out / "summary.json")
    export(summary, "svg", out / "summary.svg")
    print(f"{len(summary.subjects)} person timeline(s) -> {out / 'summary.json'}")
    return 0


def cmd_classify(cfg: PipelineConfig, args) -> int:
    network = _load_checkpoint_or_die(cfg)
    variant = "mhi" if network.spec.mode == "2d" else cfg.input_variant
    video = load_frame_dir(args.input, fps=cfg.fps)
    labels = read_clip_archive(args.labels).label_names if args.labels \
        else [f"class{i}" for i in range(network.spec.num_classes)]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = Summary(video_id=str(args.input), fps=video.fps, labels=labels)
    windows = segment_into_clips(video, cfg.clip_seconds, cfg.stride_seconds)
    if windows:
        preds, confs = _predict_windows(network, windows, cfg, variant)
        win = round(video.fps * cfg.clip_seconds)
        spans = [(w.start_frame, w.start_frame + win) for w in windows]
        bounds = shot_boundaries(video, cfg.shot_energy_threshold)
        events = build_shot_timeline(video.num_frames, bounds, preds, spans,
                                     confs, labels)
        summary.subjects.append(Subject(id=0, kind="shot", events=events))
    else:
        print("warning: video shorter than one clip; empty summary")
    export(summary, "json", out / "summary.json")
    export(summary, "svg", out / "summary.svg")
    n_events = sum(len(s.events) for s in summary.subjects)
    print(f"{n_events} shot event(s) -> {out / 'summary.json'}")
    return 0


def cmd_summarize(cfg: PipelineConfig, args) -> int:
    path = Path(args.input)
    if not path.exists():
        raise UserError(f"summary not found: {path}")
    summary = summary_from_json(path.read_text())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export(summary, "svg", out / (path.stem + ".svg"))
    print(f"rendered {out / (path.stem + '.svg')}")
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidact",
        description="Multi-person action recognition and summarization for "
                    "fixed-camera video.")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override one config key (repeatable)")
    parser.add_argument("--out-dir", help="output directory")
    parser.add_argument("--seed", type=int, help="global random seed")
    parser.add_argument("--checkpoint", help="checkpoint path")
    parser.add_argument("--debug-dir", help="dump foreground masks here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic clip dataset")
    p.add_argument("--clips-per-class", type=int, default=50)
    p.add_argument("--frames", type=int, default=32)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pack", help="pack frame directories into an archive")
    p.add_argument("input", help="root dir: one subdir per label")
    p.add_argument("output", help="archive path (.a3dc)")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("train", help="train a model on a clip archive")
    p.add_argument("data", help="clip archive (.a3dc)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an archive")
    p.add_argument("data", help="clip archive (.a3dc)")
    p.add_argument("--test-split-only", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recognize",
                       help="surveillance mode: detect, track, recognize")
    p.add_argument("input", help="frame directory")
    p.add_argument("--labels", help="archive providing label names")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("classify", help="whole-video shot classification")
    p.add_argument("input", help="frame directory")
    p.add_argument("--labels", help="archive providing label names")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("summarize", help="re-render a summary JSON as SVG")
    p.add_argument("input", help="summary.json")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects K=V, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.out_dir:
        overrides["out_dir"] = args.out_dir
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.checkpoint:
        overrides["checkpoint"] = args.checkpoint
    if args.debug_dir:
        overrides["debug_dir"] = args.debug_dir
    try:
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except (ConfigError, UserError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
