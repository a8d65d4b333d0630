"""Line-based 2D label-raster scene generator.

A scene is a side view: sky above a horizon row, a road band near the
bottom, and one line of objects per class running parallel to the road.
Each class is controlled by global attributes only: its line offset from the
road edge, the interval between consecutive objects and an occurrence
probability. Environment attributes (illumination, light direction, camera
side/offset/pitch/yaw) act on visibility and on the final camera transform.

Rendering is vectorized over a whole dataset; every image still has its own
derived seed, and every class reads its random numbers from a fixed slice of
that image's stream, so classes never perturb each other's draws.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

VOID, SKY, ROAD = 0, 1, 2


@dataclass(frozen=True)
class ObjectClass:
    id: int
    name: str
    height: int
    width: int
    size_jitter: float = 0.2
    priority: int = 0


DEFAULT_CLASSES = (
    ObjectClass(3, "building", 22, 14, 0.25, 0),
    ObjectClass(4, "fence", 5, 12, 0.2, 1),
    ObjectClass(5, "tree", 16, 6, 0.25, 2),
    ObjectClass(6, "pole", 18, 2, 0.1, 3),
    ObjectClass(7, "bicycle", 5, 5, 0.2, 4),
    ObjectClass(8, "person", 9, 3, 0.2, 5),
    ObjectClass(9, "car", 7, 12, 0.2, 6),
)


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 96
    classes: tuple[ObjectClass, ...] = DEFAULT_CLASSES
    road_top: int = 46
    road_bottom: int = 64
    horizon: int = 14
    visibility_floor: float = 0.5
    light_gain: float = 0.25
    min_interval: float = 2.0

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ValueError("raster must be at least 16x16")
        ids = [VOID, SKY, ROAD] + [c.id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError("class ids must be unique (0-2 are void, sky, road)")
        prios = [c.priority for c in self.classes]
        if len(set(prios)) != len(prios):
            raise ValueError("class priorities must be distinct")
        if not 0 <= self.road_top < self.road_bottom <= self.height:
            raise ValueError("road band must lie inside the raster")
        if not 0 <= self.horizon <= self.height:
            raise ValueError("horizon must lie inside the raster")
        if not 0.0 <= self.visibility_floor <= 1.0:
            raise ValueError("visibility_floor must lie in [0, 1]")
        if self.min_interval < 1:
            raise ValueError("min_interval must be at least one pixel")

    @property
    def n_classes(self) -> int:
        return max([ROAD] + [c.id for c in self.classes]) + 1

    @property
    def class_names(self) -> dict[int, str]:
        names = {VOID: "void", SKY: "sky", ROAD: "road"}
        names.update({c.id: c.name for c in self.classes})
        return names

    def object_class(self, name: str) -> ObjectClass:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)

    def offset_range(self) -> tuple[float, float]:
        """Offsets that keep a line's bottom row inside the raster."""
        return self.road_top - self.height + 1, float(self.road_top)

    @property
    def draws_per_class(self) -> int:
        return int(self.width // self.min_interval) + 3


@dataclass
class SceneAttributes:
    """Global scene attributes. Per-class dicts are keyed by class name."""

    offset: dict[str, float]
    interval: dict[str, float]
    occurrence: dict[str, float]
    camera_x: float = 0.0
    camera_y: float = 0.0
    illumination: float = 1.0
    light_x: float = 0.0
    light_y: float = 0.0
    camera_side: float = 0.0
    camera_pitch: float = 0.0
    camera_yaw: float = 0.0

    ENV_KEYS = ("camera_x", "camera_y", "illumination", "light_x", "light_y",
                "camera_side", "camera_pitch", "camera_yaw")

    def validate(self, config: SceneConfig) -> "SceneAttributes":
        lo, hi = config.offset_range()
        for c in config.classes:
            for d in (self.offset, self.interval, self.occurrence):
                if c.name not in d:
                    raise ValueError(f"missing attribute for class {c.name!r}")
            if not lo <= self.offset[c.name] <= hi:
                raise ValueError(f"offset of {c.name!r} puts its line outside the raster")
            if self.interval[c.name] < config.min_interval:
                raise ValueError(f"interval of {c.name!r} below {config.min_interval} px")
            if not 0.0 <= self.occurrence[c.name] <= 1.0:
                raise ValueError(f"occurrence of {c.name!r} outside [0, 1]")
        for key in ("illumination", "camera_side"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ValueError(f"{key} outside [0, 1]")
        for key in ("light_x", "light_y"):
            if not -1.0 <= getattr(self, key) <= 1.0:
                raise ValueError(f"{key} outside [-1, 1]")
        return self

    def copy(self) -> "SceneAttributes":
        return replace(self, offset=dict(self.offset), interval=dict(self.interval),
                       occurrence=dict(self.occurrence))

    def get(self, key: str) -> float:
        """Read an attribute by dotted name, e.g. ``offset.car`` or ``illumination``."""
        if "." in key:
            kind, name = key.split(".", 1)
            return getattr(self, kind)[name]
        return getattr(self, key)

    def set(self, key: str, value: float) -> None:
        if "." in key:
            kind, name = key.split(".", 1)
            d = getattr(self, kind)
            if kind not in ("offset", "interval", "occurrence") or name not in d:
                raise KeyError(key)
            d[name] = float(value)
        elif key in self.ENV_KEYS:
            setattr(self, key, float(value))
        else:
            raise KeyError(key)

    def to_dict(self) -> dict:
        return asdict(self)


def default_attributes(config: SceneConfig) -> SceneAttributes:
    names = [c.name for c in config.classes]
    return SceneAttributes(offset={n: 0.0 for n in names}, interval={n: 24.0 for n in names},
                           occurrence={n: 1.0 for n in names})


def image_seeds(seed: int, m: int) -> np.ndarray:
    return np.random.SeedSequence(seed).generate_state(m, dtype=np.uint64)


def stack_attributes(config: SceneConfig, attrs: Sequence[SceneAttributes]):
    names = [c.name for c in config.classes]
    per_class = {k: np.array([[getattr(a, k)[n] for n in names] for a in attrs], dtype=float)
                 for k in ("offset", "interval", "occurrence")}
    env = {k: np.array([getattr(a, k) for a in attrs], dtype=float) for k in SceneAttributes.ENV_KEYS}
    return per_class, env


def render_batch(config: SceneConfig, attrs: Sequence[SceneAttributes], seeds: Sequence[int]) -> np.ndarray:
    """Render one raster per (attributes, seed) pair; returns ``(m, H, W)`` uint8 labels."""
    if len(attrs) != len(seeds):
        raise ValueError("need one seed per attribute set")
    for a in attrs:
        a.validate(config)
    pc, env = stack_attributes(config, attrs)
    return render_arrays(config, pc, env, seeds)


def check_arrays(config: SceneConfig, pc: dict, env: dict) -> None:
    """Vectorized ``SceneAttributes.validate`` for stacked attributes."""
    lo, hi = config.offset_range()
    names = [c.name for c in config.classes]
    checks = [
        ("offset", (pc["offset"] < lo) | (pc["offset"] > hi), "puts its line outside the raster"),
        ("interval", pc["interval"] < config.min_interval, f"below {config.min_interval} px"),
        ("occurrence", (pc["occurrence"] < 0) | (pc["occurrence"] > 1), "outside [0, 1]"),
    ]
    for kind, bad, msg in checks:
        if bad.any():
            k = int(np.flatnonzero(bad.any(axis=0))[0])
            raise ValueError(f"{kind} of {names[k]!r} {msg}")
    for key, (a, b) in (("illumination", (0, 1)), ("camera_side", (0, 1)), ("light_x", (-1, 1)), ("light_y", (-1, 1))):
        if ((env[key] < a) | (env[key] > b)).any():
            raise ValueError(f"{key} outside [{a}, {b}]")


def render_arrays(config: SceneConfig, pc: dict, env: dict, seeds: Sequence[int]) -> np.ndarray:
    """Render from stacked attributes: ``pc`` maps offset/interval/occurrence to
    ``(m, n_classes)`` arrays (class order of ``config.classes``), ``env`` maps
    every environment key to an ``(m,)`` array."""
    m = len(seeds)
    check_arrays(config, pc, env)
    H, W = config.height, config.width
    n_cls, n_draw = len(config.classes), config.draws_per_class
    draws = np.empty((m, n_cls, 4, n_draw))
    flip_u = np.empty(m)
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        draws[i] = rng.random((n_cls, 4, n_draw))
        flip_u[i] = rng.random()

    horizon = np.clip(np.rint(config.horizon + env["camera_pitch"]), 0, H).astype(np.int64)
    order = sorted(range(n_cls), key=lambda k: config.classes[k].priority)
    ids = np.array([config.classes[k].id for k in order], dtype=np.uint8)
    n_obj = min(n_draw, int(np.ceil((W + max(c.width * (1 + c.size_jitter) for c in config.classes))
                                    / pc["interval"].min(initial=np.inf))) + 2)
    shape = (m, n_cls, n_obj)
    left, width, height = np.zeros(shape, np.int64), np.zeros(shape, np.int64), np.zeros(shape, np.int64)
    bottom = np.zeros((m, n_cls), np.int64)
    keep = np.zeros(shape, bool)

    base_vis = config.visibility_floor + (1 - config.visibility_floor) * env["illumination"]
    o = np.arange(n_obj)[None, :]
    for j, k in enumerate(order):
        cls = config.classes[k]
        interval = pc["interval"][:, k, None]
        u_keep, u_h, u_w, u_phase = (draws[:, k, q, :n_obj] for q in range(4))
        b = np.rint(config.road_top - pc["offset"][:, k]).astype(np.int64)
        x = (u_phase[:, :1] - 1.0) * interval + o * interval
        h = np.maximum(1, np.rint(cls.height * (1 + cls.size_jitter * (2 * u_h - 1)))).astype(np.int64)
        w = np.maximum(1, np.rint(cls.width * (1 + cls.size_jitter * (2 * u_w - 1)))).astype(np.int64)
        xpos = np.clip(2 * x / W - 1, -1, 1)
        ypos = np.clip(1 - 2 * b / max(config.road_top, 1), -1, 1)[:, None]
        vis = (base_vis[:, None]
               * np.clip(1 - config.light_gain * env["light_x"][:, None] * xpos, 0, None)
               * np.clip(1 - config.light_gain * env["light_y"][:, None] * ypos, 0, None))
        keep[:, j] = u_keep < pc["occurrence"][:, k, None] * np.clip(vis, 0, 1)
        left[:, j] = np.rint(x - w / 2).astype(np.int64)
        width[:, j], height[:, j], bottom[:, j] = w, h, b

    # camera: row shift, yaw shear (per source row) and x shift, then side flip
    src_r = np.arange(H)[None, :] - np.rint(env["camera_y"]).astype(np.int64)[:, None]
    shear = np.rint(env["camera_yaw"][:, None] * np.clip(src_r, 0, H - 1) / (H - 1)).astype(np.int64)
    shift = np.rint(env["camera_x"]).astype(np.int64)[:, None] + shear
    flip = flip_u < env["camera_side"]

    out = np.empty((m, H, W), dtype=np.uint8)
    _paint(horizon, config.road_top, config.road_bottom, ids, bottom, left, width, height, keep,
           src_r, shift, flip, out)
    return out


@njit(cache=True)
def _paint(horizon, road_top, road_bottom, ids, bottom, left, width, height, keep, src_r, shift, flip, out):
    m, H, W = out.shape
    n_cls, n_obj = keep.shape[1], keep.shape[2]
    canvas = np.empty((H, W), dtype=np.uint8)
    for i in range(m):
        for r in range(H):
            v = SKY if r < horizon[i] else VOID
            if road_top <= r < road_bottom:
                v = ROAD
            for c in range(W):
                canvas[r, c] = v
        # ascending priority, so later classes paint over earlier ones
        for j in range(n_cls):
            b = min(bottom[i, j], H)
            for q in range(n_obj):
                if not keep[i, j, q]:
                    continue
                c0 = max(left[i, j, q], 0)
                c1 = min(left[i, j, q] + width[i, j, q], W)
                for r in range(max(b - height[i, j, q], 0), b):
                    for c in range(c0, c1):
                        canvas[r, c] = ids[j]
        for r in range(H):
            sr = src_r[i, r]
            for c in range(W):
                sc = (W - 1 - c if flip[i] else c) - shift[i, r]
                if 0 <= sr < H and 0 <= sc < W:
                    out[i, r, c] = canvas[sr, sc]
                else:
                    out[i, r, c] = VOID


def render_scene(config: SceneConfig, attrs: SceneAttributes, seed: int) -> np.ndarray:
    return render_batch(config, [attrs], [seed])[0]


@dataclass
class Dataset:
    rasters: np.ndarray
    attributes: SceneAttributes | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rasters = np.asarray(self.rasters)
        if self.rasters.ndim != 3 or len(self.rasters) == 0:
            raise ValueError("dataset needs a nonempty (m, H, W) stack of rasters")

    def __len__(self):
        return len(self.rasters)

    def __getitem__(self, i):
        return self.rasters[i]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rasters.shape[1:]

    def n_distinct(self) -> int:
        return len({r.tobytes() for r in self.rasters})

    def save(self, directory, n_classes: int | None = None) -> Path:
        """Write each raster as a plain-text PGM plus a ``dataset.json`` sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        maxval = int(n_classes - 1 if n_classes else max(1, self.rasters.max()))
        for i, r in enumerate(self.rasters):
            write_pgm(directory / f"{i:05d}.pgm", r, maxval)
        meta = {"count": len(self), "height": self.shape[0], "width": self.shape[1], "seed": self.seed,
                "attributes": None if self.attributes is None else self.attributes.to_dict(), **self.meta}
        (directory / "dataset.json").write_text(json.dumps(meta, indent=2, default=int) + "\n")
        return directory


def write_pgm(path, raster: np.ndarray, maxval: int | None = None) -> None:
    raster = np.asarray(raster)
    maxval = int(raster.max()) if maxval is None else maxval
    lines = ["P2", f"{raster.shape[1]} {raster.shape[0]}", str(max(maxval, 1))]
    lines += [" ".join(map(str, row)) for row in raster.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines()
              for t in line.split("#", 1)[0].split()]
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + w * h], dtype=np.uint8).reshape(h, w)


def render_dataset(config: SceneConfig, attrs: SceneAttributes, m: int = 180, seed: int = 0,
                   relaxed_attrs_per_image: Sequence[SceneAttributes] | None = None) -> Dataset:
    """Render ``m`` images with per-image seeds derived from ``seed``.

    ``relaxed_attrs_per_image`` (length ``m``) replaces ``attrs`` image by image.
    """
    if m < 1:
        raise ValueError("dataset size must be >= 1")
    per_image = [attrs] * m if relaxed_attrs_per_image is None else list(relaxed_attrs_per_image)
    if len(per_image) != m:
        raise ValueError(f"expected {m} per-image attribute sets, got {len(per_image)}")
    seeds = image_seeds(seed, m)
    return Dataset(render_batch(config, per_image, seeds), attrs, seed)


def make_target(config: SceneConfig, hidden_attrs: SceneAttributes, m_val: int, m_test: int, seed: int,
                per_image=None):
    """Validation and test sets rendered from hidden attributes with disjoint seed streams.

    ``per_image``, when given, is called as ``per_image(rng, m)`` and returns
    a list of ``m`` attribute sets, letting the target carry its own
    scene-to-scene variation.
    """
    if m_val < 1 or m_test < 1:
        raise ValueError("validation and test sizes must be >= 1")
    val_ss, test_ss = np.random.SeedSequence(seed).spawn(2)
    out = []
    for ss, m in ((val_ss, m_val), (test_ss, m_test)):
        sub = int(ss.generate_state(1, dtype=np.uint64)[0])
        attrs = None if per_image is None else per_image(np.random.default_rng(sub), m)
        ds = render_dataset(config, hidden_attrs, m, sub, attrs)
        ds.meta["role"] = "validation" if ss is val_ss else "test"
        out.append(ds)
    return out[0], out[1]
