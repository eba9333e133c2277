"""On-disk dataset container binding scenes, renders, labels, trajectories.

Layout: one directory per record holding img0.ppm (input), img4.ppm
(outcome frame), mask{0,1,2,4}.pgm, traj.csv, plus a manifest.jsonl whose
first line is a header (format version + generator config snapshot) and
remaining lines are records in a fixed key order. Everything is
deterministic: writing the same samples twice gives byte-identical trees.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .imageio import CorruptFileError, read_pgm, read_ppm, write_pgm, write_ppm
from .physics import (
    PhysicsParams,
    fell_label,
    read_trajectory_csv,
    simulate,
    write_trajectory_csv,
)
from .render import MASK_TIMES, camera_for_sample, render_sequence
from .scenegen import GenConfig, SceneSample

FORMAT_VERSION = 1
SPLITS = ("train", "test")

_RECORD_KEYS = (
    "id", "seed", "n_blocks", "fell", "margin", "split",
    "image_path", "outcome_image_path", "mask_paths", "trajectory_path",
)


class MissingFileError(FileNotFoundError):
    pass


class ConsistencyFailureError(RuntimeError):
    """Stored label disagrees with a re-simulated or re-read artifact."""


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    seed: int
    n_blocks: int
    fell: bool
    margin: float  # NaN for tilted scenes and external imports
    split: str
    image_path: str
    outcome_image_path: str
    mask_paths: tuple[str, ...]
    trajectory_path: str  # empty for external imports

    def to_json(self) -> str:
        row = {k: getattr(self, k) for k in _RECORD_KEYS}
        row["mask_paths"] = list(self.mask_paths)
        row["margin"] = None if math.isnan(self.margin) else self.margin
        return json.dumps(row, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        raw = json.loads(line)
        margin = raw.get("margin")
        raw["margin"] = float("nan") if margin is None else float(margin)
        raw["mask_paths"] = tuple(raw["mask_paths"])
        return cls(**{k: raw[k] for k in _RECORD_KEYS})


@dataclass(frozen=True)
class Manifest:
    format_version: int
    gen_config: dict
    records: tuple[DatasetRecord, ...]

    def counts(self) -> dict[tuple[str, int, bool], int]:
        out: dict[tuple[str, int, bool], int] = {}
        for r in self.records:
            key = (r.split, r.n_blocks, r.fell)
            out[key] = out.get(key, 0) + 1
        return out


def _config_snapshot(cfg: GenConfig) -> dict:
    snap = dataclasses.asdict(cfg)
    snap.pop("physics")
    return snap


def _split_of(sample: SceneSample) -> str:
    return SPLITS[sample.index >> 40]


def _write_one(args) -> dict:
    sample, out_dir, rec_id = args
    scene = sample.scene
    traj = simulate(scene)
    if fell_label(traj, scene.params) != sample.label_fell:
        raise ConsistencyFailureError(f"{rec_id}: re-simulated label mismatch")
    cam = camera_for_sample(scene.n_blocks, sample.render_params, scene.params.side)
    frames = render_sequence(traj, scene.class_ids, cam, sample.render_params,
                             times=MASK_TIMES, side=scene.params.side)
    rec_dir = os.path.join(out_dir, rec_id)
    os.makedirs(rec_dir, exist_ok=True)
    write_ppm(os.path.join(rec_dir, "img0.ppm"), frames[0][0])
    write_ppm(os.path.join(rec_dir, "img4.ppm"), frames[-1][0])
    mask_names = []
    for t, (_, mask) in zip(MASK_TIMES, frames):
        name = f"mask{t:g}.pgm"
        write_pgm(os.path.join(rec_dir, name), mask, maxval=4)
        mask_names.append(name)
    write_trajectory_csv(traj, os.path.join(rec_dir, "traj.csv"))
    return {
        "id": rec_id,
        "seed": sample.seed,
        "n_blocks": scene.n_blocks,
        "fell": sample.label_fell,
        "margin": sample.margin,
        "split": _split_of(sample),
        "image_path": f"{rec_id}/img0.ppm",
        "outcome_image_path": f"{rec_id}/img4.ppm",
        "mask_paths": tuple(f"{rec_id}/{n}" for n in mask_names),
        "trajectory_path": f"{rec_id}/traj.csv",
    }


def write_dataset(samples: list[SceneSample], out_dir,
                  gen_config: GenConfig, jobs: int = 1) -> Manifest:
    """Simulate, render, and persist every sample; returns the manifest.

    Record ids are `<split>-<index within split>`; file payloads may be
    produced by a worker pool, but the manifest is assembled in sample order.
    """
    os.makedirs(out_dir, exist_ok=True)
    counters = {s: 0 for s in SPLITS}
    tasks = []
    for sample in samples:
        split = _split_of(sample)
        tasks.append((sample, str(out_dir), f"{split}-{counters[split]:05d}"))
        counters[split] += 1
    if jobs > 1:
        from multiprocessing import get_context

        with get_context("fork").Pool(jobs) as pool:
            rows = pool.map(_write_one, tasks, chunksize=16)
    else:
        rows = [_write_one(t) for t in tasks]
    records = tuple(DatasetRecord(**row) for row in rows)
    manifest = Manifest(FORMAT_VERSION, _config_snapshot(gen_config), records)
    _write_manifest(out_dir, manifest)
    return manifest


def _write_manifest(out_dir, manifest: Manifest) -> None:
    header = json.dumps(
        {"format_version": manifest.format_version, "gen_config": manifest.gen_config}
    )
    lines = [header] + [r.to_json() for r in manifest.records]
    with open(os.path.join(out_dir, "manifest.jsonl"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(dataset_dir) -> Manifest:
    path = os.path.join(dataset_dir, "manifest.jsonl")
    if not os.path.exists(path):
        raise MissingFileError(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    if not lines:
        raise CorruptFileError(f"{path}: empty manifest")
    header = json.loads(lines[0])
    records = tuple(DatasetRecord.from_json(line) for line in lines[1:])
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise CorruptFileError(f"{path}: duplicate record ids")
    return Manifest(header["format_version"], header["gen_config"], records)


@dataclass(frozen=True)
class LoadedExample:
    record: DatasetRecord
    image: np.ndarray        # float32 (3, H, W) in [0, 1]
    masks: np.ndarray | None  # uint8 (4, H, W) class ids, None for imports


def load_record(dataset_dir, record: DatasetRecord) -> LoadedExample:
    img_path = os.path.join(dataset_dir, record.image_path)
    if not os.path.exists(img_path):
        raise MissingFileError(img_path)
    img = read_ppm(img_path).astype(np.float32) / 255.0
    image = np.ascontiguousarray(img.transpose(2, 0, 1))
    masks = None
    if record.mask_paths:
        grids = []
        for rel in record.mask_paths:
            path = os.path.join(dataset_dir, rel)
            if not os.path.exists(path):
                raise MissingFileError(path)
            grids.append(read_pgm(path)[0])
        masks = np.stack(grids)
    return LoadedExample(record=record, image=image, masks=masks)


def load_dataset(dataset_dir, split: str = "all") -> list[LoadedExample]:
    """Decode every record of the split, in manifest order."""
    if split not in SPLITS + ("all",):
        raise ValueError(f"split must be train, test or all, got {split!r}")
    manifest = read_manifest(dataset_dir)
    out = []
    for record in manifest.records:
        if split != "all" and record.split != split:
            continue
        out.append(load_record(dataset_dir, record))
    return out


def add_external_record(dataset_dir, image: np.ndarray, fell: bool,
                        n_blocks: int, split: str, rec_id: str) -> DatasetRecord:
    """Import an externally captured image as a fall-label-only record."""
    manifest = read_manifest(dataset_dir)
    if any(r.id == rec_id for r in manifest.records):
        raise ValueError(f"record id {rec_id} already present")
    rec_dir = os.path.join(dataset_dir, rec_id)
    os.makedirs(rec_dir, exist_ok=True)
    write_ppm(os.path.join(rec_dir, "img0.ppm"), image)
    record = DatasetRecord(
        id=rec_id, seed=0, n_blocks=n_blocks, fell=fell, margin=float("nan"),
        split=split, image_path=f"{rec_id}/img0.ppm",
        outcome_image_path=f"{rec_id}/img0.ppm", mask_paths=(),
        trajectory_path="",
    )
    manifest = Manifest(manifest.format_version, manifest.gen_config,
                        manifest.records + (record,))
    _write_manifest(dataset_dir, manifest)
    return record


def verify_dataset(dataset_dir) -> list[str]:
    """Self-validation pass; returns a list of problems (empty = clean).

    Checks file existence and parsability, mask value ranges, balanced cell
    counts against the config snapshot, and label/trajectory consistency.
    """
    problems: list[str] = []
    try:
        manifest = read_manifest(dataset_dir)
    except (MissingFileError, CorruptFileError, KeyError) as exc:
        return [f"manifest: {exc}"]

    cfg = manifest.gen_config
    expected = {"train": cfg.get("count_per_cell"), "test": cfg.get("test_count_per_cell")}
    counts: dict[tuple[str, int, bool], int] = {}
    for r in manifest.records:
        if r.trajectory_path:  # external imports are exempt from balance
            key = (r.split, r.n_blocks, r.fell)
            counts[key] = counts.get(key, 0) + 1
    for (split, n, fell), count in sorted(counts.items()):
        want = expected.get(split)
        if want is not None and count != want:
            problems.append(
                f"cell ({split}, n={n}, fell={fell}): {count} records, expected {want}"
            )

    for record in manifest.records:
        try:
            loaded = load_record(dataset_dir, record)
        except (MissingFileError, CorruptFileError) as exc:
            problems.append(f"{record.id}: {exc}")
            continue
        if loaded.masks is not None and loaded.masks.max(initial=0) > 4:
            problems.append(f"{record.id}: mask value out of range")
        if record.trajectory_path:
            tpath = os.path.join(dataset_dir, record.trajectory_path)
            if not os.path.exists(tpath):
                problems.append(f"{record.id}: missing trajectory")
                continue
            traj = read_trajectory_csv(tpath)
            if fell_label(traj, PhysicsParams()) != record.fell:
                problems.append(f"{record.id}: fell label disagrees with trajectory")
        out_path = os.path.join(dataset_dir, record.outcome_image_path)
        if not os.path.exists(out_path):
            problems.append(f"{record.id}: missing outcome image")
    return problems
