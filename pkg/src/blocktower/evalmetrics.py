"""Metric suite: fall accuracy with binomial CIs, mean mask IoU, per-pixel
log likelihood, ROC/AUC, Pearson correlation, occlusion sensitivity maps,
and the held-out tower-size transfer protocol.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .imageio import write_pgm

N_CLASSES = 5
FINAL_MASK_INDEX = 3  # t = 4 s
PROB_CLAMP = 1e-12
OCCLUSION_GRID = 14
OCCLUSION_SIGMA_FRAC = 0.2
OCCLUSION_GRAY = 128.0 / 255.0


class EmptyForegroundError(ValueError):
    pass


class DegenerateLabelsError(ValueError):
    pass


class ConstantInputError(ValueError):
    pass


@dataclass(frozen=True)
class MaskEvalBatch:
    """Label class grids (N,H,W) and predicted distributions (N,5,H,W)."""

    labels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.labels.shape != (self.probs.shape[0], *self.probs.shape[2:]):
            raise ValueError("label and prediction grids differ in shape")
        if self.probs.shape[1] != N_CLASSES:
            raise ValueError(f"predictions must carry {N_CLASSES} classes")


def mean_mask_iou(batch: MaskEvalBatch) -> float:
    """IoU of the argmax-binarized prediction against the label mask,
    averaged over the foreground classes present in each label, then over
    examples."""
    preds = batch.probs.argmax(axis=1)
    total = 0.0
    n = batch.labels.shape[0]
    for i in range(n):
        label = batch.labels[i]
        pred = preds[i]
        classes = [c for c in range(1, N_CLASSES) if (label == c).any()]
        if not classes:
            raise EmptyForegroundError(f"mask {i} has no foreground pixels")
        acc = 0.0
        for c in classes:
            m = label == c
            q = pred == c
            acc += (m & q).sum() / (m | q).sum()
        total += acc / len(classes)
    return total / n


def log_likelihood_per_pixel(batch: MaskEvalBatch) -> float:
    """Mean natural log probability of the correct class over all pixels."""
    probs = np.clip(batch.probs, PROB_CLAMP, None)
    picked = np.take_along_axis(
        probs, batch.labels[:, None].astype(np.int64), axis=1
    )
    return float(np.log(picked).mean())


def class_constant_baseline(labels: np.ndarray) -> np.ndarray:
    """Single distribution of empirical class frequencies, for every pixel."""
    if labels.size == 0:
        raise ValueError("empty label set")
    counts = np.bincount(labels.reshape(-1).astype(np.int64), minlength=N_CLASSES)
    return counts / counts.sum()


def constant_prediction(labels: np.ndarray) -> MaskEvalBatch:
    """Class-Constant baseline broadcast over the label grids."""
    dist = class_constant_baseline(labels)
    probs = np.broadcast_to(
        dist[None, :, None, None],
        (labels.shape[0], N_CLASSES, *labels.shape[1:]),
    ).copy()
    return MaskEvalBatch(labels=labels, probs=probs)


def mask_at_t0_prediction(mask0: np.ndarray) -> np.ndarray:
    """One-hot (5,H,W) distribution using the t=0 mask as the prediction."""
    probs = np.zeros((N_CLASSES, *mask0.shape))
    np.put_along_axis(probs, mask0[None].astype(np.int64), 1.0, axis=0)
    return probs


def binomial_ci(accuracy: float, n: int) -> float:
    """Standard deviation of a binomial with p set to the observed accuracy."""
    if n < 1 or not 0.0 <= accuracy <= 1.0:
        raise ValueError("need n >= 1 and accuracy in [0, 1]")
    return math.sqrt(accuracy * (1.0 - accuracy) / n)


def roc_curve(confidences, labels) -> tuple[list[tuple[float, float]], float]:
    """Descending threshold sweep with tied confidences grouped.

    Returns ((fpr, tpr) points from (0,0) to (1,1), trapezoid AUC).
    """
    conf = np.asarray(confidences, dtype=float)
    lab = np.asarray(labels, dtype=bool)
    n_pos = int(lab.sum())
    n_neg = int(lab.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("need at least one positive and one negative")
    order = np.argsort(-conf, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < conf.size:
        j = i
        while j < conf.size and conf[order[j]] == conf[order[i]]:
            tp += bool(lab[order[j]])
            fp += not lab[order[j]]
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, auc


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt((xd**2).sum())
    sy = math.sqrt((yd**2).sum())
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("correlation undefined for constant input")
    return float((xd * yd).sum() / (sx * sy))


# -- fall/mask evaluation over datasets ---------------------------------------


@dataclass(frozen=True)
class EvalReport:
    n_examples: int
    accuracy: float
    accuracy_ci: float
    per_size: dict
    confusion: dict
    miou: float | None = None
    ll_per_px: float | None = None
    roc_points: list = field(default_factory=list)
    auc: float | None = None
    held_out: bool = False

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "accuracy": self.accuracy,
            "accuracy_ci": self.accuracy_ci,
            "per_size": self.per_size,
            "confusion": self.confusion,
            "miou": self.miou,
            "ll_per_px": self.ll_per_px,
            "roc": {"points": self.roc_points, "auc": self.auc},
            "held_out": self.held_out,
        }


def fall_probabilities(model, images: np.ndarray, batch: int = 256) -> np.ndarray:
    out = np.empty(images.shape[0])
    for i in range(0, images.shape[0], batch):
        out[i : i + batch] = model.forward_fall(images[i : i + batch])
    return out


def final_mask_probabilities(model, images: np.ndarray, batch: int = 64) -> np.ndarray:
    """Softmax distribution of the t=4s mask head, (N,5,H,W)."""
    from .learn.numerics import log_softmax

    chunks = []
    for i in range(0, images.shape[0], batch):
        _, mask_logits = model.forward(images[i : i + batch])
        chunks.append(np.exp(log_softmax(mask_logits[FINAL_MASK_INDEX].astype(np.float64))))
    return np.concatenate(chunks)


def _fall_report(probs: np.ndarray, fell: np.ndarray, sizes: np.ndarray,
                 held_out_sizes=()) -> dict:
    pred = probs > 0.5
    correct = pred == fell
    acc = float(correct.mean())
    per_size = {}
    for s in sorted(set(sizes.tolist())):
        sel = sizes == s
        per_size[int(s)] = {
            "n": int(sel.sum()),
            "accuracy": float(correct[sel].mean()),
            "accuracy_ci": binomial_ci(float(correct[sel].mean()), int(sel.sum())),
            "held_out": int(s) in held_out_sizes,
        }
    confusion = {
        "tp": int((pred & fell).sum()),
        "fp": int((pred & ~fell).sum()),
        "tn": int((~pred & ~fell).sum()),
        "fn": int((~pred & fell).sum()),
    }
    return {"accuracy": acc, "per_size": per_size, "confusion": confusion}


def evaluate(model, examples, held_out_sizes=()) -> EvalReport:
    """Fall metrics always; mask metrics when every example carries masks."""
    if not examples:
        raise ValueError("no examples to evaluate")
    images = np.stack([e.image for e in examples])
    fell = np.array([e.record.fell for e in examples], dtype=bool)
    sizes = np.array([e.record.n_blocks for e in examples])
    probs = fall_probabilities(model, images)
    base = _fall_report(probs, fell, sizes, held_out_sizes)

    miou = ll = None
    if all(e.masks is not None for e in examples):
        labels = np.stack([e.masks[FINAL_MASK_INDEX] for e in examples])
        batch = MaskEvalBatch(labels=labels,
                              probs=final_mask_probabilities(model, images))
        miou = mean_mask_iou(batch)
        ll = log_likelihood_per_pixel(batch)

    roc_points: list = []
    auc = None
    if fell.any() and not fell.all():
        roc_points, auc = roc_curve(probs, fell)

    return EvalReport(
        n_examples=len(examples),
        accuracy=base["accuracy"],
        accuracy_ci=binomial_ci(base["accuracy"], len(examples)),
        per_size=base["per_size"],
        confusion=base["confusion"],
        miou=miou,
        ll_per_px=ll,
        roc_points=[list(p) for p in roc_points],
        auc=auc,
        held_out=bool(held_out_sizes),
    )


# -- occlusion sensitivity ------------------------------------------------------


def occlusion_heatmap(model, image: np.ndarray) -> np.ndarray:
    """14x14 grid of fall-probability changes under a Gaussian gray patch.

    Cell [j, i] uses a patch centred at ((i+0.5)*W/14, (j+0.5)*H/14) in
    pixel coordinates; the patch alpha-blends mid-gray with weight
    exp(-r^2 / (2 sigma^2)), sigma = 0.2 * W.
    """
    _, h, w = image.shape
    sigma = OCCLUSION_SIGMA_FRAC * w
    base = fall_probabilities(model, image[None])[0]
    cols = np.arange(w) + 0.5
    rows = np.arange(h) + 0.5
    occluded = np.empty((OCCLUSION_GRID * OCCLUSION_GRID, *image.shape),
                        dtype=image.dtype)
    k = 0
    for j in range(OCCLUSION_GRID):
        cy = (j + 0.5) * h / OCCLUSION_GRID
        for i in range(OCCLUSION_GRID):
            cx = (i + 0.5) * w / OCCLUSION_GRID
            r2 = (cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2
            alpha = np.exp(-r2 / (2.0 * sigma * sigma)).astype(image.dtype)
            occluded[k] = (1.0 - alpha) * image + alpha * OCCLUSION_GRAY
            k += 1
    probs = fall_probabilities(model, occluded)
    return (probs - base).reshape(OCCLUSION_GRID, OCCLUSION_GRID)


def export_heatmap_pgm(heatmap: np.ndarray, path_prefix: str) -> None:
    """PGM with the affine value mapping recorded in a JSON sidecar."""
    lo = float(heatmap.min())
    hi = float(heatmap.max())
    if hi > lo:
        scaled = np.round((heatmap - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(heatmap)
    write_pgm(f"{path_prefix}.pgm", scaled.astype(np.uint8), maxval=255)
    sidecar = {
        "min": lo,
        "max": hi,
        "mapping": "value = min + (max - min) * pixel / 255",
    }
    with open(f"{path_prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


# -- held-out tower size transfer ---------------------------------------------


def transfer_protocol(train_examples, test_examples, train_sizes,
                      train_cfg, loss_cfg, model_kind: str = "mini") -> dict:
    """Train on a subset of tower sizes; evaluate each size separately.

    Returns {"model": trained model, "reports": {size: EvalReport}} with
    held-out sizes flagged.
    """
    from .learn.train import train

    train_sizes = tuple(sorted(set(train_sizes)))
    if not train_sizes or not set(train_sizes) <= {2, 3, 4}:
        raise ValueError("train_sizes must be a non-empty subset of {2, 3, 4}")
    subset = [e for e in train_examples if e.record.n_blocks in train_sizes]
    model, log = train(subset, train_cfg, loss_cfg, model_kind=model_kind)
    held_out = tuple(s for s in (2, 3, 4) if s not in train_sizes)
    reports = {}
    for size in (2, 3, 4):
        sized = [e for e in test_examples if e.record.n_blocks == size]
        if not sized:
            continue
        reports[size] = evaluate(model, sized,
                                 held_out_sizes=(size,) if size in held_out else ())
    return {"model": model, "log": log, "reports": reports,
            "train_sizes": train_sizes, "held_out_sizes": held_out}
