"""Randomized, balanced tower sampling.

Every example is reproducible from (master_seed, global index): the index
encodes split and tower size in its high bits, a SplitMix64-derived child
seed drives one PCG32 stream per example, and all draws happen in a fixed
documented order. Balance across (tower size, fell/stay) cells is exact by
rejection sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .physics import (
    BlockPose,
    PhysicsParams,
    TowerScene,
    fell_label,
    simulate,
    static_stability,
)
from .rng import Pcg32, derive_seed

SPLIT_IDS = {"train": 0, "test": 1}
TOWER_SIZES = (2, 3, 4)
# cells in output order: per size, fell examples then stay examples
CELL_LABELS = (True, False)

_MAX_DRAW_FACTOR = 1_000_000


class ExhaustedSamplingError(RuntimeError):
    """A (size, label) cell could not be filled; the config is degenerate."""


@dataclass(frozen=True)
class GenConfig:
    master_seed: int = 2016
    count_per_cell: int = 1366
    test_count_per_cell: int = 171
    offset_range: float = 0.6
    tilt_range_deg: float = 0.0
    camera_scale_range: tuple[float, float] = (0.9, 1.1)
    camera_shift_range: tuple[float, float] = (-0.3, 0.3)
    background_range: tuple[float, float] = (0.2, 0.9)
    brightness_range: tuple[float, float] = (0.7, 1.0)
    physics: PhysicsParams = field(default_factory=PhysicsParams)

    def __post_init__(self):
        if self.count_per_cell < 1 or self.test_count_per_cell < 1:
            raise ValueError("cell counts must be >= 1")
        if not 0.0 <= self.offset_range < 1.0:
            raise ValueError("offset_range must lie in [0, 1) so blocks overlap")

    def cell_count(self, split: str) -> int:
        return self.count_per_cell if split == "train" else self.test_count_per_cell


@dataclass(frozen=True)
class RenderParams:
    camera_scale: float
    camera_shift: float
    background: float
    brightness: float


@dataclass(frozen=True)
class SceneSample:
    scene: TowerScene
    render_params: RenderParams
    seed: int
    index: int
    label_fell: bool
    margin: float  # analytic margin; NaN when any block is tilted


_CONFIG_KEYS = {
    "master_seed",
    "count_per_cell",
    "test_count_per_cell",
    "offset_range",
    "tilt_range_deg",
    "camera_scale_range",
    "camera_shift_range",
    "background_range",
    "brightness_range",
}


def load_gen_config(path) -> GenConfig:
    """GenConfig from a JSON file; all keys optional, unknown keys rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("camera_scale_range", "camera_shift_range", "background_range",
                "brightness_range"):
        if key in raw:
            raw[key] = tuple(float(v) for v in raw[key])
    return GenConfig(**raw)


def global_index(split: str, n_blocks: int, draw: int) -> int:
    """Compose the reproducible example index from its lane coordinates."""
    return (SPLIT_IDS[split] << 40) | (n_blocks << 36) | draw


def sample_tower(seed: int, n_blocks: int, cfg: GenConfig,
                 index: int = 0) -> SceneSample:
    """Draw one tower and its render parameters from a single PCG32 stream.

    Draw order: class permutation, base x, per-block offsets, per-block
    tilts, camera scale, camera shift, background gray, brightness. The
    label comes from simulating the scene; the analytic margin is attached
    when the stack is axis-aligned.
    """
    if n_blocks not in TOWER_SIZES:
        raise ValueError(f"n_blocks must be one of {TOWER_SIZES}")
    rng = Pcg32(seed)
    side = cfg.physics.side

    classes = [1, 2, 3, 4]
    rng.shuffle(classes)
    class_ids = tuple(classes[:n_blocks])

    xs = [rng.uniform(*cfg.camera_shift_range) * side]
    for _ in range(n_blocks - 1):
        xs.append(xs[-1] + rng.uniform(-cfg.offset_range, cfg.offset_range) * side)
    tilts = [
        math.radians(rng.uniform(-cfg.tilt_range_deg, cfg.tilt_range_deg))
        for _ in range(n_blocks)
    ]

    render = RenderParams(
        camera_scale=rng.uniform(*cfg.camera_scale_range),
        camera_shift=rng.uniform(*cfg.camera_shift_range) * side,
        background=rng.uniform(*cfg.background_range),
        brightness=rng.uniform(*cfg.brightness_range),
    )

    # Stack resting: a tilted square's axis-aligned half-height.
    def half_h(theta: float) -> float:
        return 0.5 * side * (abs(math.cos(theta)) + abs(math.sin(theta)))

    ys = [half_h(tilts[0])]
    for i in range(1, n_blocks):
        ys.append(ys[-1] + half_h(tilts[i - 1]) + half_h(tilts[i]))

    scene = TowerScene(
        blocks=tuple(
            BlockPose(x=xs[i], y=ys[i], theta=tilts[i]) for i in range(n_blocks)
        ),
        class_ids=class_ids,
        params=cfg.physics,
    )
    label = fell_label(simulate(scene), cfg.physics)
    if all(t == 0.0 for t in tilts):
        margin = static_stability(scene).margin
    else:
        margin = float("nan")
    return SceneSample(
        scene=scene,
        render_params=render,
        seed=seed,
        index=index,
        label_fell=label,
        margin=margin,
    )


def sample_at_index(cfg: GenConfig, split: str, n_blocks: int,
                    draw: int) -> SceneSample:
    """Regenerate the exact sample produced at a lane draw position."""
    idx = global_index(split, n_blocks, draw)
    return sample_tower(derive_seed(cfg.master_seed, idx), n_blocks, cfg, index=idx)


def _fill_lane(cfg: GenConfig, split: str, n_blocks: int) -> dict[bool, list[SceneSample]]:
    per_cell = cfg.cell_count(split)
    cells: dict[bool, list[SceneSample]] = {True: [], False: []}
    limit = _MAX_DRAW_FACTOR * per_cell
    draw = 0
    while any(len(v) < per_cell for v in cells.values()):
        if draw >= limit:
            missing = [lab for lab, v in cells.items() if len(v) < per_cell]
            raise ExhaustedSamplingError(
                f"cell (n={n_blocks}, fell={missing}) unfilled after {draw} draws"
            )
        sample = sample_at_index(cfg, split, n_blocks, draw)
        bucket = cells[sample.label_fell]
        if len(bucket) < per_cell:
            bucket.append(sample)
        draw += 1
    return cells


def generate_balanced(cfg: GenConfig, split: str = "train",
                      jobs: int = 1) -> list[SceneSample]:
    """Exactly cell_count(split) samples per (size, label) cell.

    Output order is deterministic: sizes ascending, fell before stay within
    a size, examples by draw index. Lanes are independent, so jobs > 1
    distributes them across processes without changing the output.
    """
    if split not in SPLIT_IDS:
        raise ValueError(f"split must be one of {sorted(SPLIT_IDS)}")
    if jobs > 1:
        from multiprocessing import get_context

        with get_context("fork").Pool(min(jobs, len(TOWER_SIZES))) as pool:
            lanes = pool.starmap(
                _fill_lane, [(cfg, split, n) for n in TOWER_SIZES]
            )
    else:
        lanes = [_fill_lane(cfg, split, n) for n in TOWER_SIZES]
    out: list[SceneSample] = []
    for lane in lanes:
        for label in CELL_LABELS:
            out.extend(lane[label])
    return out
