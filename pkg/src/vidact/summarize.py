"""Per-person and per-shot action timelines from per-clip predictions, with
deterministic JSON and SVG export.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SVG_PX_PER_SECOND = 20
SVG_LANE_HEIGHT = 24

# Fixed palette cycled over labels so SVG bytes are reproducible.
PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"]


@dataclass
class TimelineEvent:
    action: str
    start: int            # frame index, inclusive
    end: int              # frame index, exclusive
    confidence: float

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"event must span at least one frame: "
                             f"[{self.start}, {self.end})")


@dataclass
class Subject:
    id: int
    kind: str             # "person" or "shot"
    events: list[TimelineEvent] = field(default_factory=list)


@dataclass
class Summary:
    video_id: str
    fps: float
    labels: list[str]
    subjects: list[Subject] = field(default_factory=list)


def smooth_predictions(labels: list[int], window: int = 3) -> list[int]:
    """Sliding-window majority vote; ties keep the previous output label."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    if window == 1 or not labels:
        return list(labels)
    half = window // 2
    out = []
    prev = labels[0]
    for i in range(len(labels)):
        votes = labels[max(0, i - half) : i + half + 1]
        counts: dict[int, int] = {}
        for v in votes:
            counts[v] = counts.get(v, 0) + 1
        best = max(counts.values())
        winners = [v for v, c in counts.items() if c == best]
        choice = prev if prev in winners else min(winners)
        out.append(choice)
        prev = choice
    return out


def build_person_timeline(labels: list[int], confidences: list[float],
                          clip_spans: list[tuple[int, int]],
                          label_names: list[str]) -> list[TimelineEvent]:
    """Merge consecutive equal clip labels into events covering their spans."""
    if not labels:
        return []
    if not (len(labels) == len(confidences) == len(clip_spans)):
        raise ValueError("labels, confidences, and clip spans must align")
    events = []
    run_start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[run_start]:
            confs = confidences[run_start:i]
            events.append(TimelineEvent(
                action=label_names[labels[run_start]],
                start=clip_spans[run_start][0],
                end=clip_spans[i - 1][1],
                confidence=float(np.mean(confs))))
            run_start = i
    return events


def build_shot_timeline(num_frames: int, boundaries: list[int],
                        clip_labels: list[int], clip_spans: list[tuple[int, int]],
                        clip_confidences: list[float],
                        label_names: list[str]) -> list[TimelineEvent]:
    """One event per shot, labeled by the majority vote of its clips.

    boundaries are the frame indices where a new shot starts (frame 0
    excluded); shots partition [0, num_frames).
    """
    bounds = [0] + sorted(boundaries) + [num_frames]
    for a, b in zip(bounds, bounds[1:]):
        if a >= b:
            raise ValueError(f"overlapping or empty shot at boundary {a}")
    events = []
    for shot_id, (a, b) in enumerate(zip(bounds, bounds[1:])):
        votes: dict[int, list[float]] = {}
        for lab, (s, e), conf in zip(clip_labels, clip_spans, clip_confidences):
            mid = (s + e) / 2
            if a <= mid < b:
                votes.setdefault(lab, []).append(conf)
        if not votes:
            continue
        best = max(votes, key=lambda k: (len(votes[k]), -k))
        events.append(TimelineEvent(action=label_names[best], start=a, end=b,
                                    confidence=float(np.mean(votes[best]))))
    return events


# -- export ------------------------------------------------------------------


def summary_to_json(summary: Summary) -> str:
    """Stable key order so repeated export is byte-identical."""
    doc = {
        "video": summary.video_id,
        "fps": summary.fps,
        "labels": list(summary.labels),
        "subjects": [
            {
                "id": s.id,
                "kind": s.kind,
                "events": [
                    {"action": e.action, "start": e.start, "end": e.end,
                     "confidence": round(e.confidence, 6)}
                    for e in s.events
                ],
            }
            for s in summary.subjects
        ],
    }
    return json.dumps(doc, indent=2)


def summary_from_json(text: str) -> Summary:
    doc = json.loads(text)
    summary = Summary(video_id=doc["video"], fps=doc["fps"],
                      labels=list(doc["labels"]))
    for s in doc["subjects"]:
        subject = Subject(id=s["id"], kind=s["kind"])
        for e in s["events"]:
            subject.events.append(TimelineEvent(
                action=e["action"], start=e["start"], end=e["end"],
                confidence=e["confidence"]))
        summary.subjects.append(subject)
    return summary


def summary_to_svg(summary: Summary) -> str:
    """Timeline rendering: one lane per subject, one rectangle per event."""
    margin_left = 80
    margin_top = 10
    legend_h = 20
    max_end = max((e.end for s in summary.subjects for e in s.events), default=0)
    width = margin_left + int(max_end / summary.fps * SVG_PX_PER_SECOND) + 20
    width = max(width, 300)
    height = margin_top + len(summary.subjects) * (SVG_LANE_HEIGHT + 6) + legend_h + 30
    colors = {lab: PALETTE[i % len(PALETTE)]
              for i, lab in enumerate(summary.labels)}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]

    def fx(frame):
        return margin_left + frame / summary.fps * SVG_PX_PER_SECOND

    for lane, s in enumerate(summary.subjects):
        y = margin_top + lane * (SVG_LANE_HEIGHT + 6)
        parts.append(
            f'<text x="4" y="{y + 16}" font-size="12" '
            f'font-family="sans-serif">{s.kind} {s.id}</text>')
        for e in s.events:
            x0, x1 = fx(e.start), fx(e.end)
            parts.append(
                f'<rect x="{x0:.2f}" y="{y}" width="{x1 - x0:.2f}" '
                f'height="{SVG_LANE_HEIGHT}" fill="{colors[e.action]}" '
                f'stroke="#333333"><title>{e.action} '
                f'[{e.start},{e.end}) conf={e.confidence:.3f}</title></rect>')
    ly = height - legend_h - 5
    x = margin_left
    for lab in summary.labels:
        parts.append(f'<rect x="{x}" y="{ly}" width="14" height="14" '
                     f'fill="{colors[lab]}" stroke="#333333"/>')
        parts.append(f'<text x="{x + 18}" y="{ly + 12}" font-size="12" '
                     f'font-family="sans-serif">{lab}</text>')
        x += 26 + 7 * len(lab)
    parts.append("</svg>")
    return "\n".join(parts)


def export(summary: Summary, fmt: str, path: str | Path) -> None:
    if fmt == "json":
        Path(path).write_text(summary_to_json(summary))
    elif fmt == "svg":
        Path(path).write_text(summary_to_svg(summary))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
