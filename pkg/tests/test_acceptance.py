"""Release acceptance checks, one test per gate.

Each test prints a single "[ACCEPTANCE] <name>: PASS|FAIL" line on the real
stdout so the verdicts stay visible under pytest output capture. The heavy
fixtures (full three-variant training run, crop-space recognizer) are session
scoped and shared across tests.
"""

import json
import math
import sys
import time

import numpy as np
import pytest

import conftest
from conftest import brute_force_conv3d, central_difference, max_rel_err
from vidact import tensor_ops as T
from vidact.cli import derive_bs, main
from vidact.config import PipelineConfig
from vidact.kcf import kcf_detect, kcf_init, kcf_update
from vidact.motionseg import BackgroundModel, detect_people, to_gray
from vidact.network import (Network, NetworkSpec, TrainConfig, build_network,
                            evaluate, load_checkpoint, save_checkpoint, train)
from vidact.sequences import compute_mhi, crop_box, subsample_time
from vidact.synth import (ACTIONS, SceneSpec, SpriteSpec, generate_scene,
                          generate_shot_video, iter_action_dataset,
                          make_action_dataset)
from vidact.tensor_ops import ConvParams, PReLUParams, Tensor
from vidact.tracking import MultiTracker, iou
from vidact.videoio import (SPLIT_PRESETS, Clip, ClipArchive,
                            pack_clip_archive, read_clip_archive,
                            resize_bilinear, segment_into_clips,
                            split_dataset, write_pnm)


def report(name: str, ok: bool, detail: str = "") -> None:
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"[ACCEPTANCE] {name}: {verdict}{suffix}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)


def progress(message: str) -> None:
    print(f"[acceptance] {message}", file=sys.__stdout__, flush=True)


def write_frames(clip: Clip, out_dir) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(clip.num_frames):
        write_pnm(out_dir / f"frame_{t:05d}.ppm",
                  (clip.frames[t] * 255).astype(np.uint8))


# -- gate 1: numeric core -----------------------------------------------------


class TestNumericCore:
    def conv_case(self, seed):
        r = np.random.default_rng(seed)
        three_d = seed % 2 == 0
        n = int(r.integers(1, 3))
        ci = int(r.integers(1, 4))
        co = int(r.integers(1, 4))
        kd = int(r.integers(1, 4)) if three_d else 1
        kh = int(r.integers(1, 4))
        kw = int(r.integers(1, 4))
        d = kd + int(r.integers(0, 3)) if three_d else 1
        h = kh + int(r.integers(0, 4))
        w = kw + int(r.integers(0, 4))
        stride = tuple(int(r.integers(1, 3)) for _ in range(3))
        padding = (int(r.integers(0, kd)), int(r.integers(0, kh)),
                   int(r.integers(0, kw)))
        x = r.standard_normal((n, ci, d, h, w))
        k = r.standard_normal((co, ci, kd, kh, kw))
        b = r.standard_normal(co)
        return x, k, b, stride, padding

    def test_numeric_core(self):
        t0 = time.monotonic()
        worst_conv = 0.0
        for seed in range(100):
            x, k, b, stride, padding = self.conv_case(seed)
            params = ConvParams(kernel=Tensor(k), bias=Tensor(b),
                                stride=stride, padding=padding)
            got = T.conv_forward(x, params)
            ref = brute_force_conv3d(x, k, b, stride, padding)
            rel = float(np.max(np.abs(got - ref)
                               / np.maximum(1.0, np.abs(ref))))
            worst_conv = max(worst_conv, rel)
        conv_ok = worst_conv <= 1e-6

        worst_back = 0.0
        r = np.random.default_rng(321)

        # conv backward, all three gradients
        x = r.standard_normal((2, 2, 3, 5, 5))
        k = r.standard_normal((3, 2, 2, 3, 3))
        b = r.standard_normal(3)
        params = ConvParams(kernel=Tensor(k.copy()), bias=Tensor(b.copy()),
                            stride=(1, 1, 1), padding=(1, 1, 1))
        dx, dw, db = T.conv_backward(
            x, params, np.ones_like(T.conv_forward(x, params)))
        worst_back = max(
            worst_back,
            max_rel_err(dx, central_difference(
                lambda v: T.conv_forward(v, params).sum(), x)),
            max_rel_err(dw, central_difference(
                lambda v: T.conv_forward(x, ConvParams(
                    kernel=Tensor(v), bias=params.bias, stride=params.stride,
                    padding=params.padding)).sum(), k)),
            max_rel_err(db, central_difference(
                lambda v: T.conv_forward(x, ConvParams(
                    kernel=params.kernel, bias=Tensor(v),
                    stride=params.stride, padding=params.padding)).sum(), b)))

        # max pool (distinct values, so no argmax ties near the FD step)
        x = r.permutation(4 * 2 * 4 * 6 * 6).astype(np.float64) \
            .reshape(4, 2, 4, 6, 6) / 7.0
        out, argmax = T.maxpool_forward(x, (2, 2, 2))
        dxp = T.maxpool_backward(x.shape, argmax, np.ones_like(out))
        worst_back = max(worst_back, max_rel_err(dxp, central_difference(
            lambda v: T.maxpool_forward(v, (2, 2, 2))[0].sum(), x)))

        # PReLU, both input and slope gradients
        x = r.standard_normal((3, 4, 2, 5, 5)) + 0.05
        a = r.random(4) * 0.5 + 0.1
        act = PReLUParams(Tensor(a.copy()))
        dxp, da = T.prelu_backward(x, act, np.ones_like(x))
        worst_back = max(
            worst_back,
            max_rel_err(dxp, central_difference(
                lambda v: T.prelu_forward(v, act).sum(), x)),
            max_rel_err(da, central_difference(
                lambda v: T.prelu_forward(x, PReLUParams(Tensor(v))).sum(),
                a)))

        # linear layer
        x2 = r.standard_normal((4, 6))
        w2 = r.standard_normal((6, 3))
        b2 = r.standard_normal(3)
        wt, bt = Tensor(w2.copy()), Tensor(b2.copy())
        dxl, dwl, dbl = T.linear_backward(
            x2, wt, np.ones_like(T.linear_forward(x2, wt, bt)))
        worst_back = max(
            worst_back,
            max_rel_err(dxl, central_difference(
                lambda v: T.linear_forward(v, wt, bt).sum(), x2)),
            max_rel_err(dwl, central_difference(
                lambda v: T.linear_forward(x2, Tensor(v), bt).sum(), w2)),
            max_rel_err(dbl, central_difference(
                lambda v: T.linear_forward(x2, wt, Tensor(v)).sum(), b2)))

        # softmax cross-entropy
        logits = r.standard_normal((5, 4))
        y = r.integers(0, 4, 5)
        _, dlogits = T.softmax_cross_entropy(logits, y)
        worst_back = max(worst_back, max_rel_err(
            dlogits, central_difference(
                lambda v: T.softmax_cross_entropy(v, y)[0], logits)))
        back_ok = worst_back < 1e-5

        # tiny full network, input gradient against central differences
        spec = NetworkSpec(mode="2d", input_shape=(1, 8, 8),
                           encoder_channels=(2, 3), head_channels=(3, 4, 4),
                           fc_width=8, num_classes=4)
        net = Network(spec, seed=6).astype(np.float64)
        xin = np.random.default_rng(6).random((2, 1, 1, 8, 8))
        yin = np.array([1, 3])
        net.zero_grads()
        _, dlog = T.softmax_cross_entropy(net.forward(xin), yin)
        dxn = net.backward(dlog)

        def net_loss(v):
            loss, _ = T.softmax_cross_entropy(net.forward(v), yin)
            return loss

        num = np.zeros_like(xin)
        h = 1e-6
        for idx in np.ndindex(xin.shape):
            xp, xm = xin.copy(), xin.copy()
            xp[idx] += h
            xm[idx] -= h
            num[idx] = (net_loss(xp) - net_loss(xm)) / (2 * h)
        denom = max(np.abs(num).max(), np.abs(dxn).max(), 1e-12)
        net_err = float(np.abs(dxn - num).max() / denom)
        net_ok = net_err < 1e-4

        elapsed = time.monotonic() - t0
        time_ok = elapsed < 300
        ok = conv_ok and back_ok and net_ok and time_ok
        report("numeric-core", ok,
               f"conv={worst_conv:.2e} backward={worst_back:.2e} "
               f"network={net_err:.2e} elapsed={elapsed:.1f}s")
        assert conv_ok and back_ok and net_ok and time_ok


# -- gate 2: PReLU boundary behavior ------------------------------------------


def test_prelu_identities():
    r = np.random.default_rng(77)
    ok = True
    for _ in range(20):
        x = r.standard_normal((2, 5, 2, 6, 6))
        relu = T.prelu_forward(x, PReLUParams(Tensor(np.zeros(5))))
        ident = T.prelu_forward(x, PReLUParams(Tensor(np.ones(5))))
        ok = ok and np.array_equal(relu, np.maximum(x, 0.0))
        ok = ok and np.array_equal(ident, x)
    report("prelu-identities", ok)
    assert ok


# -- gate 3: tracker ----------------------------------------------------------


def test_tracker():
    # self-detection: trained filter peaks at zero shift on its own frame
    self_hits = 0
    for seed in range(100):
        r = np.random.default_rng(seed)
        frame = r.random((1, 48, 48)).astype(np.float32)
        box = (int(r.integers(0, 24)), int(r.integers(0, 24)),
               int(r.integers(8, 20)), int(r.integers(8, 20)))
        state = kcf_init(frame, box)
        dx, dy, _ = kcf_detect(state, to_gray(frame))
        self_hits += (dx, dy) == (0.0, 0.0)
    self_ok = self_hits == 100

    # 1 px/frame translation, per-frame center error <= 1 px over 30 frames
    sprite = SpriteSpec(pattern="translate", size=16, speed=1.0,
                        start=(20.0, 40.0), texture_seed=11)
    scene = SceneSpec(width=128, height=80, duration=2.0, sprites=[sprite],
                      background_seed=7)
    video, truth = generate_scene(scene)
    state = kcf_init(video.frames[0], truth.per_frame[0][0][1])
    max_err = 0.0
    for t in range(1, 31):
        box, _, lost = kcf_update(state, video.frames[t])
        gt = truth.per_frame[t][0][1]
        err = max(abs(box[0] + box[2] / 2 - gt[0] - gt[2] / 2),
                  abs(box[1] + box[3] / 2 - gt[1] - gt[3] / 2))
        max_err = max(max_err, err)
        if lost:
            max_err = float("inf")
    translate_ok = max_err <= 1.0

    # two people crossing: zero identity switches with default settings
    left = SpriteSpec(pattern="translate", size=16, speed=1.5,
                      start=(-40.0, 26.0), texture_seed=21)
    right = SpriteSpec(pattern="translate", size=16, speed=-1.5,
                       start=(200.0, 54.0), texture_seed=99)
    video, truth = generate_scene(SceneSpec(width=160, height=96,
                                            duration=6.0,
                                            sprites=[left, right],
                                            background_seed=17))
    model = BackgroundModel(96, 160, alpha=0.05, threshold=0.1)
    model.seed(to_gray(video.frames[0]))
    tracker = MultiTracker()
    for t in range(video.num_frames):
        gray = to_gray(video.frames[t])
        dets, mask = detect_people(model, gray, min_area=64, frame_index=t)
        model.update_masked(gray, mask)
        if t >= 25:
            tracker.step(video.frames[t], dets, t)
    long_tracks = [t for t in tracker.all_tracks() if len(t.states) > 20]
    switches = 0
    for track in long_tracks:
        owners = set()
        for frame_index, box in track.states:
            gt = truth.per_frame[frame_index]
            if gt:
                owners.add(max(gt, key=lambda e: iou(box, e[1]))[0])
        switches += len(owners) > 1
    crossing_ok = len(long_tracks) == 2 and switches == 0

    ok = self_ok and translate_ok and crossing_ok
    report("tracker", ok,
           f"self-detection={self_hits}/100 max-track-err={max_err:.2f}px "
           f"tracks={len(long_tracks)} switches={switches}")
    assert ok


# -- gate 4: three-input-variant training run ---------------------------------

ABL_CANVAS = 32
ABL_INPUT_T = 8
ABL_CLIPS_PER_CLASS = 300
ABL_ENC = (4, 8)
ABL_HEAD = (8, 16, 32)
ABL_FC = 64


@pytest.fixture(scope="session")
def ablation(tmp_path_factory):
    t0 = time.monotonic()
    cfg = PipelineConfig(input_size=ABL_CANVAS)
    xs = {"rgb": [], "bs": [], "mhi": []}
    ys = []
    progress(f"generating {6 * ABL_CLIPS_PER_CLASS} clips "
             f"({ABL_CLIPS_PER_CLASS}/class) at {ABL_CANVAS}px")
    for i, (clip, label) in enumerate(iter_action_dataset(
            ABL_CLIPS_PER_CLASS, num_frames=32, canvas=ABL_CANVAS,
            seed=2024)):
        bs = derive_bs(clip, cfg)
        xs["rgb"].append(np.transpose(
            subsample_time(clip, ABL_INPUT_T).frames,
            (1, 0, 2, 3)).astype(np.float32))
        xs["bs"].append(np.transpose(
            subsample_time(bs, ABL_INPUT_T).frames,
            (1, 0, 2, 3)).astype(np.float32))
        xs["mhi"].append(compute_mhi(bs, tau=16).values[None]
                         .astype(np.float32))
        ys.append(label)
        if (i + 1) % 300 == 0:
            progress(f"  {i + 1} clips done")
    x = {k: np.stack(v) for k, v in xs.items()}
    y = np.asarray(ys, dtype=np.int64)
    tr, va, te = split_dataset(list(range(len(y))), ys,
                               SPLIT_PRESETS["80/10/10"], seed=0)
    gen_seconds = time.monotonic() - t0
    progress(f"dataset ready in {gen_seconds:.0f}s; "
             f"split {len(tr)}/{len(va)}/{len(te)}")

    accs, ckpts = {}, {}
    out = tmp_path_factory.mktemp("ablation")
    for variant in ("rgb", "bs", "mhi"):
        if variant == "mhi":
            spec = NetworkSpec(mode="2d",
                               input_shape=(1, ABL_CANVAS, ABL_CANVAS),
                               encoder_channels=ABL_ENC,
                               head_channels=ABL_HEAD, fc_width=ABL_FC,
                               num_classes=6)
        else:
            spec = NetworkSpec(mode="3d",
                               input_shape=(3, ABL_INPUT_T, ABL_CANVAS,
                                            ABL_CANVAS),
                               encoder_channels=ABL_ENC,
                               head_channels=ABL_HEAD, fc_width=ABL_FC,
                               num_classes=6)
        net = build_network(spec, seed=0)
        tc = TrainConfig(lr=0.001, batch=64, epochs=100, seed=0,
                         early_stop_acc=0.95, early_stop_patience=2)
        progress(f"training {variant} model")
        train(net, x[variant][tr], y[tr], tc,
              x_val=x[variant][va], y_val=y[va],
              log=lambda m, v=variant: progress(f"  [{v}] {m}"))
        acc, _ = evaluate(net, x[variant][te], y[te], 64)
        accs[variant] = acc
        ckpts[variant] = out / f"{variant}.a3dw"
        save_checkpoint(net, ckpts[variant])
        progress(f"{variant} test accuracy {acc:.4f} "
                 f"({time.monotonic() - t0:.0f}s elapsed)")
    return {"accs": accs, "ckpts": ckpts,
            "elapsed": time.monotonic() - t0}


def test_input_variant_training(ablation):
    accs = ablation["accs"]
    elapsed = ablation["elapsed"]
    floors_ok = all(a >= 0.90 for a in accs.values())
    time_ok = elapsed <= 3600
    ordering = accs["rgb"] <= accs["bs"] and accs["rgb"] <= accs["mhi"]
    ok = floors_ok and time_ok
    report("input-variant-training", ok,
           f"rgb={accs['rgb']:.3f} bs={accs['bs']:.3f} mhi={accs['mhi']:.3f} "
           f"ordering-rgb-lowest={'holds' if ordering else 'violated'} "
           f"elapsed={elapsed:.0f}s")
    assert floors_ok, f"accuracy floors not met: {accs}"
    assert time_ok, f"training run took {elapsed:.0f}s"


# -- gate 5: surveillance mode on a three-sprite scene ------------------------

CROP_CLASSES = ["oscillate_arms", "spin", "still"]


@pytest.fixture(scope="session")
def crop_model(tmp_path_factory):
    """Classifier trained on tracked-crop-style inputs.

    Training samples mirror the recognizer's geometry: tight per-frame boxes
    around a single sprite, resized to the network input, motion history per
    16-frame window.
    """
    rng = np.random.default_rng(5150)
    xs, ys = [], []
    for li, action in enumerate(CROP_CLASSES):
        for _ in range(20):
            sprite = SpriteSpec(
                pattern=action, size=16,
                texture_seed=int(rng.integers(1 << 30)),
                start=(32 + float(rng.uniform(-2, 2)),
                       32 + float(rng.uniform(-2, 2))),
                phase=float(rng.uniform(0, 2 * math.pi)))
            scene = SceneSpec(width=64, height=64, duration=2.0,
                              background_seed=int(rng.integers(1 << 30)),
                              sprites=[sprite])
            video, truth = generate_scene(scene)
            boxes = truth.boxes_for(0)
            crops = np.stack([
                resize_bilinear(crop_box(video.frames[t], boxes[t]), 32, 32)
                for t in range(video.num_frames)]).astype(np.float32)
            for window in segment_into_clips(Clip(crops, fps=video.fps),
                                             0.64):
                xs.append(compute_mhi(window, tau=16).values[None]
                          .astype(np.float32))
                ys.append(li)
    x = np.stack(xs)
    y = np.asarray(ys, dtype=np.int64)
    spec = NetworkSpec(mode="2d", input_shape=(1, 32, 32),
                       encoder_channels=(4, 8), head_channels=(8, 16, 32),
                       fc_width=64, num_classes=3)
    net = build_network(spec, seed=1)
    progress(f"training crop-space model on {len(x)} windows")
    train(net, x, y, TrainConfig(lr=0.001, batch=32, epochs=60, seed=1,
                                 early_stop_acc=0.99, early_stop_patience=2),
          x_val=x, y_val=y)
    acc, _ = evaluate(net, x, y)
    progress(f"crop-space model training accuracy {acc:.3f}")
    out = tmp_path_factory.mktemp("crop_model")
    ckpt = out / "crop.a3dw"
    save_checkpoint(net, ckpt)
    labels_archive = out / "labels.a3dc"
    pack_clip_archive(ClipArchive(label_names=list(CROP_CLASSES)),
                      labels_archive)
    return {"ckpt": ckpt, "labels": labels_archive}


def test_surveillance_scene(crop_model, tmp_path):
    sprites = [
        SpriteSpec(pattern="oscillate_arms", size=16, start=(40.0, 32.0),
                   delay=12, texture_seed=3),
        SpriteSpec(pattern="spin", size=16, start=(112.0, 64.0), delay=15,
                   texture_seed=7, phase=0.3),
        SpriteSpec(pattern="still", size=16, start=(40.0, 96.0), delay=18,
                   texture_seed=11),
    ]
    scene = SceneSpec(width=160, height=128, duration=4.0, background_seed=2,
                      sprites=sprites)
    video, _ = generate_scene(scene)
    frames_dir = tmp_path / "frames"
    write_frames(video, frames_dir)
    out = tmp_path / "out"
    rc = main(["--out-dir", str(out), "--checkpoint",
               str(crop_model["ckpt"]),
               "--set", "warmup_frames=10", "--set", "input_size=32",
               "--set", "clip_seconds=0.64", "--set", "stride_seconds=0.64",
               "recognize", str(frames_dir),
               "--labels", str(crop_model["labels"])])
    assert rc == 0
    doc = json.loads((out / "summary.json").read_text())
    count_ok = len(doc["subjects"]) == 3

    # match each emitted subject to its sprite by median track position
    centers = {}
    for line in (out / "tracks.jsonl").read_text().splitlines():
        rec = json.loads(line)
        x0, y0, w, h = rec["box"]
        centers.setdefault(rec["track"], []).append((x0 + w / 2,
                                                     y0 + h / 2))
    correct = 0
    for subject in doc["subjects"]:
        pts = centers.get(subject["id"], [])
        if not pts or not subject["events"]:
            continue
        cx = float(np.median([p[0] for p in pts]))
        cy = float(np.median([p[1] for p in pts]))
        sprite = min(sprites,
                     key=lambda s: (s.start[0] - cx) ** 2
                     + (s.start[1] - cy) ** 2)
        durations = {}
        for event in subject["events"]:
            durations[event["action"]] = durations.get(event["action"], 0) \
                + event["end"] - event["start"]
        dominant = max(durations, key=durations.get)
        correct += dominant == sprite.pattern
    ok = count_ok and correct >= 2
    report("surveillance-scene", ok,
           f"subjects={len(doc['subjects'])}/3 "
           f"dominant-action-correct={correct}/3")
    assert count_ok, f"expected 3 subjects, got {len(doc['subjects'])}"
    assert correct >= 2


# -- gate 6: whole-video shot classification ----------------------------------


def shot_video_inputs(tmp_path):
    shots = [SpriteSpec(pattern="oscillate_arms", size=8, start=(16.0, 16.0)),
             SpriteSpec(pattern="spin", size=8, start=(16.0, 16.0),
                        phase=0.5),
             SpriteSpec(pattern="bounce", size=8, start=(16.0, 16.0),
                        phase=1.0)]
    video, bounds, labels = generate_shot_video(shots, 64, canvas=ABL_CANVAS)
    frames_dir = tmp_path / "frames"
    write_frames(video, frames_dir)
    labels_archive = tmp_path / "labels.a3dc"
    pack_clip_archive(ClipArchive(label_names=list(ACTIONS)), labels_archive)
    return frames_dir, labels_archive, bounds, labels


def run_classify(ablation, frames_dir, labels_archive, out):
    return main(["--out-dir", str(out),
                 "--checkpoint", str(ablation["ckpts"]["mhi"]),
                 "--set", "input_size=32",
                 "--set", "clip_seconds=1.28", "--set", "stride_seconds=1.28",
                 "classify", str(frames_dir),
                 "--labels", str(labels_archive)])


def test_shot_classification(ablation, tmp_path):
    frames_dir, labels_archive, bounds, labels = shot_video_inputs(tmp_path)
    out = tmp_path / "out"
    rc = run_classify(ablation, frames_dir, labels_archive, out)
    assert rc == 0
    doc = json.loads((out / "summary.json").read_text())
    events = doc["subjects"][0]["events"] if doc["subjects"] else []
    count_ok = len(events) == 3
    bounds_ok = count_ok and all(
        abs(events[i + 1]["start"] - b) <= 2 for i, b in enumerate(bounds))
    labels_ok = count_ok and [e["action"] for e in events] == \
        [ACTIONS[l] for l in labels]
    ok = count_ok and bounds_ok and labels_ok
    got = [(e["action"], e["start"], e["end"]) for e in events]
    report("shot-classification", ok,
           f"events={got} expected-bounds={bounds}")
    assert count_ok, f"expected 3 events, got {got}"
    assert bounds_ok, f"boundaries off by more than 2 frames: {got}"
    assert labels_ok, f"labels wrong: {got}"


# -- gate 7: determinism ------------------------------------------------------


def test_determinism(ablation, tmp_path):
    frames_dir, labels_archive, _, _ = shot_video_inputs(tmp_path)
    json_bytes, svg_bytes, csv_bytes = [], [], []
    for name in ("first", "second"):
        out = tmp_path / f"classify_{name}"
        assert run_classify(ablation, frames_dir, labels_archive, out) == 0
        json_bytes.append((out / "summary.json").read_bytes())
        svg_bytes.append((out / "summary.svg").read_bytes())

    clips, labels = make_action_dataset(3, num_frames=32, canvas=ABL_CANVAS,
                                        seed=9)
    archive_path = tmp_path / "small.a3dc"
    pack_clip_archive(ClipArchive(list(ACTIONS), clips, labels), archive_path)
    for name in ("first", "second"):
        out = tmp_path / f"eval_{name}"
        rc = main(["--out-dir", str(out),
                   "--checkpoint", str(ablation["ckpts"]["mhi"]),
                   "--set", "input_size=32",
                   "eval", str(archive_path)])
        assert rc == 0
        csv_bytes.append((out / "confusion.csv").read_bytes())

    ok = json_bytes[0] == json_bytes[1] and svg_bytes[0] == svg_bytes[1] \
        and csv_bytes[0] == csv_bytes[1]
    report("determinism", ok,
           "classify JSON/SVG and eval CSV byte-identical on rerun"
           if ok else "outputs differ between identical reruns")
    assert json_bytes[0] == json_bytes[1]
    assert svg_bytes[0] == svg_bytes[1]
    assert csv_bytes[0] == csv_bytes[1]


# -- gate 8: format roundtrips ------------------------------------------------


def test_format_roundtrips(tmp_path):
    clips, labels = make_action_dataset(2, num_frames=8, canvas=32, seed=4)
    first = tmp_path / "a.a3dc"
    second = tmp_path / "b.a3dc"
    pack_clip_archive(ClipArchive(list(ACTIONS), clips, labels), first)
    loaded = read_clip_archive(first)
    pack_clip_archive(loaded, second)
    archive_ok = first.read_bytes() == second.read_bytes()
    payload_ok = all(
        a.frames.tobytes() == b.frames.tobytes()
        for a, b in zip(clips, loaded.clips))

    spec = NetworkSpec(mode="2d", input_shape=(1, 8, 8),
                       encoder_channels=(2, 3), head_channels=(3, 4, 4),
                       fc_width=8, num_classes=4)
    net = Network(spec, seed=42)
    ck1 = tmp_path / "a.a3dw"
    ck2 = tmp_path / "b.a3dw"
    save_checkpoint(net, ck1, epoch=3, history=[{"epoch": 0}])
    reloaded, state, epoch, history = load_checkpoint(ck1)
    save_checkpoint(reloaded, ck2, state=state, epoch=epoch, history=history)
    checkpoint_ok = ck1.read_bytes() == ck2.read_bytes()
    x = np.random.default_rng(42).random((2, 1, 8, 8), dtype=np.float32)
    forward_ok = net.forward(x).tobytes() == reloaded.forward(x).tobytes()

    ok = archive_ok and payload_ok and checkpoint_ok and forward_ok
    report("format-roundtrips", ok,
           f"archive={archive_ok} payload={payload_ok} "
           f"checkpoint={checkpoint_ok} forward={forward_ok}")
    assert ok
