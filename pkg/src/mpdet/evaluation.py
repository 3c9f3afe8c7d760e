"""Detection scoring: greedy IoU matching, per-class AP, mAP, P/R/F1.

Matching is greedy in descending score order at a single IoU threshold
(0.3 by default). AP uses all scored detections with all-point
interpolation (area under the precision envelope); precision, recall and
F1 are reported at a fixed confidence threshold (0.2 by default). A class
with neither ground truth nor detections is excluded from mAP with a
warning rather than rewarded for silence.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    DetectionBox,
    ManeuverClass,
    MalformedInput,
    iou,
    parse_detection_record,
    read_jsonl,
)

DEFAULT_IOU_THRESH = 0.3
DEFAULT_CONF_THRESH = 0.2


@dataclass
class MatchResult:
    """Outcome of matching one class's detections against its ground truth."""

    det_is_tp: list
    det_matched_gt: list  # index into the gt list, or None
    gt_matched: list

    @property
    def tp(self) -> int:
        return sum(self.det_is_tp)

    @property
    def fp(self) -> int:
        return len(self.det_is_tp) - self.tp

    @property
    def fn(self) -> int:
        return len(self.gt_matched) - sum(self.gt_matched)


def match_detections(dets: list, gts: list, iou_thresh: float = DEFAULT_IOU_THRESH) -> MatchResult:
    """Greedy matching within one class.

    Detections claim, in descending score order (ties by input order), the
    unmatched ground truth with the highest IoU when that IoU exceeds the
    threshold; IoU ties break by ground-truth list order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    det_is_tp = [False] * len(dets)
    det_matched_gt = [None] * len(dets)
    gt_matched = [False] * len(gts)
    for idx in order:
        best_iou, best_gt = iou_thresh, None
        for g, gt in enumerate(gts):
            if gt_matched[g]:
                continue
            overlap = iou(dets[idx], gt)
            if overlap > best_iou:
                best_iou, best_gt = overlap, g
        if best_gt is not None:
            det_is_tp[idx] = True
            det_matched_gt[idx] = best_gt
            gt_matched[best_gt] = True
    return MatchResult(det_is_tp, det_matched_gt, gt_matched)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple:
    """(P, R, F1) with every 0/0 defined as 0."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_score(precision, recall)


def _match_by_video(dets, gts_by_video, iou_thresh):
    """TP flags for detections of one class across videos, in score order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1].score, i))
    matched = {vid: [False] * len(boxes) for vid, boxes in gts_by_video.items()}
    flags = []
    for idx in order:
        vid, det = dets[idx]
        gts = gts_by_video.get(vid, [])
        best_iou, best_gt = iou_thresh, None
        for g, gt in enumerate(gts):
            if matched[vid][g]:
                continue
            overlap = iou(det, gt)
            if overlap > best_iou:
                best_iou, best_gt = overlap, g
        if best_gt is not None:
            matched[vid][best_gt] = True
            flags.append(True)
        else:
            flags.append(False)
    return order, flags


def average_precision(dets: list, gts_by_video: dict, iou_thresh: float = DEFAULT_IOU_THRESH):
    """All-point interpolated AP for one class.

    `dets` is a list of (video_id, DetectionBox); `gts_by_video` maps
    video ids to that video's ground-truth boxes of the same class.
    Returns None when there is nothing to score (no gt and no detections).
    """
    n_gt = sum(len(v) for v in gts_by_video.values())
    if n_gt == 0:
        return None if not dets else 0.0
    if not dets:
        return 0.0
    _, flags = _match_by_video(dets, gts_by_video, iou_thresh)
    tp = np.cumsum([1 if f else 0 for f in flags])
    fp = np.cumsum([0 if f else 1 for f in flags])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def mean_ap(class_aps) -> float:
    """Unweighted mean of the given per-class APs (excluded classes omitted)."""
    values = [v for v in class_aps if v is not None]
    if not values:
        return 0.0
    return float(sum(values) / len(values))


@dataclass
class EvalReport:
    dataset_id: str
    iou_thresh: float
    conf_thresh: float
    per_class: dict  # short name -> metrics dict
    excluded_classes: list
    map: float
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "iou_threshold": self.iou_thresh,
            "confidence_threshold": self.conf_thresh,
            "classes": self.per_class,
            "excluded_classes": self.excluded_classes,
            "mAP": self.map,
            "warnings": self.warnings,
        }

    def save_json(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def save_csv(self, path) -> None:
        """Summary table mirroring the per-class AP / P / R / F1 layout."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "ap", "precision", "recall", "f1", "tp", "fp", "fn"])
            for name, m in self.per_class.items():
                writer.writerow(
                    [
                        name,
                        "" if m["ap"] is None else f"{m['ap']:.6f}",
                        f"{m['precision']:.6f}",
                        f"{m['recall']:.6f}",
                        f"{m['f1']:.6f}",
                        m["tp"],
                        m["fp"],
                        m["fn"],
                    ]
                )
            writer.writerow(["mAP", f"{self.map:.6f}", "", "", "", "", "", ""])


def _load_boxes(path) -> list:
    records = read_jsonl(path)
    return [parse_detection_record(obj) for obj in records]


def evaluate(
    detections,
    ground_truth,
    iou_thresh: float = DEFAULT_IOU_THRESH,
    conf_thresh: float = DEFAULT_CONF_THRESH,
    classes=None,
    dataset_id: str | None = None,
) -> EvalReport:
    """Score a detections file (or list) against ground truth.

    `detections` and `ground_truth` are JSONL paths or lists of
    (video_id, DetectionBox). `classes` restricts scoring (e.g. overtakes
    only for the classical baseline); restriction does not change the
    per-class numbers of the classes kept.
    """
    if isinstance(detections, (str, Path)):
        if dataset_id is None:
            dataset_id = Path(detections).stem
        detections = _load_boxes(detections)
    if isinstance(ground_truth, (str, Path)):
        ground_truth = _load_boxes(ground_truth)
    if dataset_id is None:
        dataset_id = "in-memory"
    wanted = list(ManeuverClass) if classes is None else [
        c if isinstance(c, ManeuverClass) else ManeuverClass.from_short_name(c) for c in classes
    ]

    per_class = {}
    excluded = []
    warnings = []
    aps = []
    for label in wanted:
        dets = [(vid, box) for vid, box in detections if box.label is label]
        gts_by_video = {}
        for vid, box in ground_truth:
            if box.label is label:
                gts_by_video.setdefault(vid, []).append(box)
        ap = average_precision(dets, gts_by_video, iou_thresh)
        if ap is None:
            excluded.append(label.short_name)
            warnings.append(
                f"class {label.short_name} has no ground truth and no detections; "
                f"excluded from mAP"
            )
            continue
        aps.append(ap)

        confident = [(vid, box) for vid, box in dets if box.score >= conf_thresh]
        _, flags = _match_by_video(confident, gts_by_video, iou_thresh)
        tp = sum(flags)
        fp = len(flags) - tp
        fn = sum(len(v) for v in gts_by_video.values()) - tp
        precision, recall, f1 = precision_recall_f1(tp, fp, fn)
        per_class[label.short_name] = {
            "ap": round(ap, 6),
            "precision": round(precision, 6),
            "recall": round(recall, 6),
            "f1": round(f1, 6),
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "n_gt": sum(len(v) for v in gts_by_video.values()),
            "n_det": len(dets),
        }
    return EvalReport(
        dataset_id=dataset_id,
        iou_thresh=iou_thresh,
        conf_thresh=conf_thresh,
        per_class=per_class,
        excluded_classes=excluded,
        map=round(mean_ap(aps), 6),
        warnings=warnings,
    )
