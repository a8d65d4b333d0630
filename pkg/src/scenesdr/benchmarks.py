"""Ready-made benchmark problems.

Toys are deterministic reward tables over small discrete spaces (with a
known optimum by enumeration). Line-scene benchmarks pair an attribute space
with hidden target attributes, rendered target sets and a ``SceneReward``.

Attribute names address ``SceneAttributes`` fields: ``offset.<class>``,
``interval.<class>``, ``occurrence.<class>`` or an environment key.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .optim import TableReward
from .scene import Dataset, SceneAttributes, SceneConfig, default_attributes, make_target, stack_attributes
from .space import AttributeSpace, AttributeSpec, GroupPlan
from .task import SceneReward

# --- toys -------------------------------------------------------------------

SEPARABLE_TABLES = (
    (0.20, 0.90, 0.40, 0.10),
    (0.70, 0.30, 0.10, 0.95),
    (0.05, 0.35, 0.80, 0.50),
)


def toy_space(n_attributes: int, num_bins: int) -> AttributeSpace:
    return AttributeSpace(AttributeSpec(f"a{i}", 0.0, 1.0, num_bins, "density") for i in range(n_attributes))


def separable_table(tables=SEPARABLE_TABLES) -> np.ndarray:
    """Reward = mean of per-attribute tables, as a full joint table."""
    grids = np.meshgrid(*[np.asarray(t, dtype=float) for t in tables], indexing="ij")
    return sum(grids) / len(tables)


def correlated_table(num_bins: int = 4, weight: float = 0.3, bonus: float = 0.4) -> np.ndarray:
    """Two attributes; a bonus only when both pick the same bin.

    Per attribute the reward rises with the bin index, so the joint optimum is
    the top bin for both. Greedy search from a context where the other
    attribute sits lower locks onto the "match the other one" bonus instead.
    """
    t = np.linspace(0.0, 1.0, num_bins)
    a, b = np.meshgrid(t, t, indexing="ij")
    return weight * a + weight * b + bonus * np.eye(num_bins)


@dataclass
class Problem:
    """A space, a group plan, a training-time evaluator and a held-out scorer."""

    name: str
    space: AttributeSpace
    plan: GroupPlan
    evaluator: object
    test_evaluator: object = None
    adverse_context: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.plan.validated(len(self.space))
        if self.test_evaluator is None:
            self.test_evaluator = self.evaluator

    def score(self, values, seed: int = 0) -> float:
        return float(self.test_evaluator.evaluate(np.asarray(values, dtype=float), seed))


def toy_separable(num_bins: int = 4) -> Problem:
    tables = [np.resize(np.asarray(t), num_bins) for t in SEPARABLE_TABLES]
    space = toy_space(len(tables), num_bins)
    return Problem("toy_separable", space, GroupPlan.single(len(space)),
                   TableReward(space, separable_table(tables)))


def toy_correlated(num_bins: int = 4) -> Problem:
    space = toy_space(2, num_bins)
    ctx = space.mid_centers()
    return Problem("toy_correlated", space, GroupPlan.single(2), TableReward(space, correlated_table(num_bins)),
                   adverse_context=ctx)


# --- line scenes ------------------------------------------------------------

POSITION_RANGES = {
    "building": (0.0, 30.0), "fence": (0.0, 20.0), "tree": (0.0, 24.0), "bicycle": (-6.0, 16.0),
    "person": (-6.0, 16.0), "pole": (0.0, 20.0), "car": (-16.0, 8.0),
}
INTERVAL_RANGES = {
    "building": (14.0, 40.0), "fence": (10.0, 40.0), "tree": (8.0, 40.0), "bicycle": (6.0, 40.0),
    "person": (4.0, 30.0), "pole": (6.0, 40.0), "car": (12.0, 48.0),
}
ENV_RANGES = {
    "illumination": (0.0, 1.0), "light_x": (-1.0, 1.0), "light_y": (-1.0, 1.0), "camera_side": (0.0, 1.0),
    "camera_x": (-8.0, 8.0), "camera_y": (-6.0, 6.0), "camera_pitch": (-8.0, 8.0), "camera_yaw": (-8.0, 8.0),
}

# hidden "real world" content; deliberately off bin centers
HIDDEN_23 = {
    "offset.building": 7.3, "offset.fence": 2.2, "offset.tree": 13.9, "offset.bicycle": 3.1,
    "offset.person": -1.7, "offset.pole": 4.6, "offset.car": -8.6,
    "occurrence.building": 0.86, "interval.building": 17.5, "interval.fence": 33.0, "interval.tree": 21.0,
    "interval.bicycle": 29.0, "interval.person": 9.5, "interval.pole": 15.0, "interval.car": 19.0,
    "illumination": 0.62, "light_x": 0.3, "light_y": -0.2, "camera_side": 0.25,
    "camera_x": 2.4, "camera_y": -1.3, "camera_pitch": 3.6, "camera_yaw": -2.2,
}

NAMES_23 = (
    [f"offset.{c}" for c in ("building", "fence", "tree", "bicycle", "person", "pole", "car")]
    + ["occurrence.building"] + [f"interval.{c}" for c in ("building", "fence", "tree", "bicycle", "person", "pole", "car")]
    + list(ENV_RANGES)
)
NAMES_11 = ["offset.building", "offset.tree", "offset.person", "offset.car",
            "interval.building", "interval.car", "occurrence.tree", "occurrence.person",
            "illumination", "camera_x", "camera_y"]


def scene_spec(name: str, num_bins: int = 10, ranges: dict | None = None) -> AttributeSpec:
    kind, _, cls = name.partition(".")
    if kind not in ("offset", "interval", "occurrence") and name not in ENV_RANGES:
        raise KeyError(f"unknown scene attribute {name!r}")
    family = {"offset": "position", "interval": "density", "occurrence": "density"}.get(kind, "environment")
    if ranges and name in ranges:
        return AttributeSpec(name, *ranges[name], num_bins, family)
    if kind == "offset":
        return AttributeSpec(name, *POSITION_RANGES[cls], num_bins, "position")
    if kind == "interval":
        return AttributeSpec(name, *INTERVAL_RANGES[cls], num_bins, "density")
    if kind == "occurrence":
        return AttributeSpec(name, 0.2 if cls == "building" else 0.0, 1.0, num_bins, "density")
    return AttributeSpec(name, *ENV_RANGES[name], num_bins, "environment")


def base_attributes(config: SceneConfig) -> SceneAttributes:
    """Values used for every attribute outside the searched space."""
    a = default_attributes(config)
    for k, v in HIDDEN_23.items():
        a.set(k, v)
    return a


def hidden_attributes(config: SceneConfig, overrides: dict | None = None) -> SceneAttributes:
    a = base_attributes(config)
    for k, v in (overrides or {}).items():
        a.set(k, v)
    return a


class VectorMapper:
    """Maps raw attribute vectors onto copies of fixed base attributes.

    ``batch`` does the same for an ``(m, N)`` matrix straight into the stacked
    arrays ``render_arrays`` consumes.
    """

    def __init__(self, names, base: SceneAttributes, config: SceneConfig):
        self.names = list(names)
        self.base = base
        self.config = config
        self._pc, self._env = stack_attributes(config, [base])
        classes = [c.name for c in config.classes]
        self._slots = []
        for n in self.names:
            kind, _, cls = n.partition(".")
            self._slots.append((kind, classes.index(cls)) if cls else (n, None))

    def __call__(self, values) -> SceneAttributes:
        a = self.base.copy()
        for k, v in zip(self.names, values):
            a.set(k, float(v))
        return a

    def batch(self, values):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        m = len(values)
        pc = {k: np.repeat(v, m, axis=0) for k, v in self._pc.items()}
        env = {k: np.repeat(v, m) for k, v in self._env.items()}
        for j, (key, col) in enumerate(self._slots):
            if col is None:
                env[key] = values[:, j].copy()
            else:
                pc[key][:, col] = values[:, j]
        return pc, env


@dataclass
class LineSceneSetup:
    config: SceneConfig
    space: AttributeSpace
    hidden: SceneAttributes
    mapper: VectorMapper
    validation: Dataset
    test: Dataset


def line_scene_problem(name: str, names, plan_groups, *, config: SceneConfig | None = None, num_bins: int = 10,
                       m_train: int = 180, m_val: int = 180, m_test: int = 180, half_width_frac: float = 0.5,
                       target_seed: int = 12345, hidden_overrides: dict | None = None, base_overrides: dict | None = None,
                       target_spread: float = 0.0, adverse: dict | None = None,
                       ranges: dict | None = None) -> Problem:
    """Build a line-scene benchmark.

    ``target_spread`` (a fraction of each attribute's range) gives the hidden
    target its own per-image variation around the hidden values, standing in
    for scene-to-scene diversity in real data.
    """
    config = config or SceneConfig()
    space = AttributeSpace(scene_spec(n, num_bins, ranges) for n in names)
    hidden = hidden_attributes(config, hidden_overrides)
    base = hidden_attributes(config, base_overrides)
    mapper = VectorMapper(space.names, base, config)
    per_image = None
    if target_spread > 0:
        hidden_vec = np.array([hidden.get(n) for n in space.names])
        h = target_spread * (space.hi - space.lo)
        hid_mapper = VectorMapper(space.names, hidden, config)

        def per_image(rng, m):
            u = rng.uniform(-1.0, 1.0, size=(m, len(space)))
            return [hid_mapper(v) for v in np.clip(hidden_vec + u * h, space.lo, space.hi)]

    validation, test = make_target(config, hidden, m_val, m_test, target_seed, per_image)
    reward = SceneReward(config, space, validation, m_train, mapper, half_width_frac)
    test_reward = SceneReward(config, space, test, m_train, mapper, half_width_frac)
    adverse_ctx = None
    if adverse:
        adverse_ctx = space.mid_centers()
        for k, v in adverse.items():
            adverse_ctx[space.index(k)] = v
    setup = LineSceneSetup(config, space, hidden, mapper, validation, test)
    return Problem(name, space, GroupPlan(plan_groups), reward, test_reward, adverse_ctx,
                   {"setup": setup, "hidden_values": np.array([hidden.get(n) for n in space.names])})


def plan_23() -> list[list[int]]:
    """Six groups: positions, four density pairs, environment."""
    idx = {n: i for i, n in enumerate(NAMES_23)}
    pos = [idx[n] for n in NAMES_23 if n.startswith("offset.")]
    dens = [idx[n] for n in NAMES_23 if n.startswith(("interval.", "occurrence."))]
    env = [idx[n] for n in ENV_RANGES]
    return [pos] + [dens[i:i + 2] for i in range(0, 8, 2)] + [env]


def plan_11() -> list[list[int]]:
    return [[0, 1, 2, 3], [4, 5], [6, 7], [8, 9, 10]]


def line_scene_23(**kw) -> Problem:
    return line_scene_problem("line23", NAMES_23, plan_23(), **kw)


def line_scene_11(**kw) -> Problem:
    return line_scene_problem("line11", NAMES_11, plan_11(), **kw)


COUPLED_CLASSES = ("building", "tree", "car")


def line_scene_coupled(shift: float = 6.0, **kw) -> Problem:
    """Three object lines plus the camera height, with every other class switched off.

    ``camera_y`` moves the whole raster while each offset moves one line, so
    the attributes are coupled: the adverse context puts the camera ``shift``
    rows off and every line offset ``shift`` rows the other way, which keeps
    the objects where the target has them. From there, moving any single
    coordinate toward the truth costs reward; only a joint move pays off.
    """
    others = {f"occurrence.{c.name}": 0.0 for c in (kw.get("config") or SceneConfig()).classes
              if c.name not in COUPLED_CLASSES}
    names = [f"offset.{c}" for c in COUPLED_CLASSES] + ["camera_y"]
    kw.setdefault("m_train", 90)
    prob = line_scene_problem("coupled", names, [list(range(len(names)))], hidden_overrides=others,
                              base_overrides=others, **kw)
    raw = np.array([HIDDEN_23[n] + shift for n in names])
    prob.adverse_context = prob.space.centers(prob.space.to_bins(np.clip(raw, prob.space.lo, prob.space.hi)))
    return prob


BENCHMARKS: dict[str, Callable[..., Problem]] = {
    "coupled": line_scene_coupled,
    "toy_separable": toy_separable,
    "toy_correlated": toy_correlated,
    "line11": line_scene_11,
    "line23": line_scene_23,
}
