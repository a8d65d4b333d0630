"""Outer optimization loops over a black-box reward.

Every method is a small resumable state machine (``step`` advances one logged
row, ``state_dict``/``load_state`` snapshot everything including the rng),
with the plain functions ``run_sdr``, ``attribute_descent`` and friends as the
one-shot entry points.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .policy import (AdamState, EmaBaseline, Episode, MlpPolicy, baseline_update, forward, greedy_bins,
                     reinforce_update, sample_bins)
from .space import AttributeSpace, GroupPlan

SEED_BOUND = 2**31 - 1


class RewardEvaluator(Protocol):
    def evaluate(self, values: np.ndarray, seed: int) -> float:
        """Score in [0, 1] for one attribute vector; pure given (values, seed)."""


class EvaluationError(RuntimeError):
    def __init__(self, message, values=None, seed=None):
        super().__init__(message)
        self.values = None if values is None else np.array(values)
        self.seed = seed


class CountingEvaluator:
    """Wraps an evaluator and counts calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def evaluate(self, values, seed):
        self.calls += 1
        return self.inner.evaluate(values, seed)


class TableReward:
    """Deterministic reward looked up from a table indexed by the bins of the values."""

    def __init__(self, space: AttributeSpace, table):
        self.space = space
        self.table = np.asarray(table, dtype=float)
        if self.table.shape != tuple(space.num_bins):
            raise ValueError(f"table shape {self.table.shape} != bin counts {tuple(space.num_bins)}")

    def evaluate(self, values, seed=0):
        return float(self.table[tuple(self.space.to_bins(self.space.check(values)))])


def call_evaluator(evaluator, values: np.ndarray, seed: int) -> float:
    try:
        r = float(evaluator.evaluate(values, seed))
    except EvaluationError:
        raise
    except Exception as exc:
        raise EvaluationError(f"evaluator failed on {np.array2string(values, precision=6)} (seed {seed}): {exc}",
                              values, seed) from exc
    if not (np.isfinite(r) and 0.0 <= r <= 1.0):
        raise EvaluationError(f"evaluator returned {r!r}, expected a score in [0, 1]", values, seed)
    return r


@dataclass
class SdrConfig:
    """SDR hyperparameters.

    ``half_width_frac``/``no_relaxation`` describe the relaxation the reward
    evaluator applies when rendering; the optimizer itself always proposes bin
    centers. ``group_search='exhaustive'`` swaps the policy for brute force
    over each group's bins.
    """

    samples_per_update: int = 8
    updates_per_group: int = 50
    learning_rate: float = 1e-2
    half_width_frac: float = 0.5
    hidden: tuple[int, ...] = (256, 256)
    baseline_decay: float = 0.9
    baseline_first: bool = False
    passes: int = 1
    no_relaxation: bool = False
    single_group: bool = False
    shuffle_groups: bool = False
    group_search: str = "policy"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("samples_per_update", "updates_per_group", "passes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.half_width_frac <= 0.5:
            raise ValueError("half_width_frac must lie in [0, 0.5]")
        if self.group_search not in ("policy", "exhaustive"):
            raise ValueError("group_search must be 'policy' or 'exhaustive'")

    @property
    def relaxation(self) -> float:
        return 0.0 if self.no_relaxation else self.half_width_frac


@dataclass
class UpdateEntry:
    update: int
    group: int
    mean_reward: float
    best_reward: float
    evals: int
    wall_ms: float


CSV_HEADER = "update,group,mean_reward,best_reward,evals,wall_ms"


@dataclass
class RunRecord:
    method: str
    entries: list[UpdateEntry] = field(default_factory=list)
    best_score: float = -math.inf
    best_values: np.ndarray | None = None
    final_values: np.ndarray | None = None
    plan: GroupPlan | None = None
    completed: bool = False

    @property
    def evaluations(self) -> int:
        return self.entries[-1].evals if self.entries else 0

    def best_curve(self) -> np.ndarray:
        return np.array([e.best_reward for e in self.entries])

    def csv_rows(self) -> list[str]:
        return [f"{e.update},{e.group},{e.mean_reward:.17g},{e.best_reward:.17g},{e.evals},{e.wall_ms:.3f}"
                for e in self.entries]

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER, *self.csv_rows()]) + "\n"


class _Run:
    """Shared bookkeeping: rng, evaluation counter, best-so-far, wall clock."""

    method = "base"

    def __init__(self, space: AttributeSpace, evaluator, rng: np.random.Generator, record_wall_time: bool = True):
        self.space = space
        self.evaluator = evaluator
        self.rng = rng
        self.record = RunRecord(self.method)
        self.record_wall_time = record_wall_time
        self.evals = 0
        self.elapsed = 0.0
        self._t0 = None

    def _eval(self, values, seed) -> float:
        r = call_evaluator(self.evaluator, values, seed)
        self.evals += 1
        if r > self.record.best_score:
            self.record.best_score = r
            self.record.best_values = np.array(values, dtype=float)
        return r

    def _log(self, update, group, rewards):
        wall = 0.0
        if self.record_wall_time:
            wall = (self.elapsed + time.perf_counter() - self._t0) * 1e3
        self.record.entries.append(UpdateEntry(update, group, float(np.mean(rewards)), self.record.best_score,
                                               self.evals, wall))

    @property
    def done(self) -> bool:
        raise NotImplementedError

    def _step(self):
        raise NotImplementedError

    def step(self) -> UpdateEntry:
        if self.done:
            raise RuntimeError("run already finished")
        self._t0 = time.perf_counter()
        try:
            self._step()
        finally:
            self.elapsed += time.perf_counter() - self._t0
        if self.done:
            self.record.completed = True
        return self.record.entries[-1]

    def run(self, max_steps: int | None = None, callback=None) -> RunRecord:
        n = 0
        while not self.done and (max_steps is None or n < max_steps):
            self.step()
            n += 1
            if callback is not None:
                callback(self)
        return self.record

    # --- snapshotting -------------------------------------------------
    def state_dict(self) -> tuple[dict, dict[str, np.ndarray]]:
        rec = self.record
        meta = {
            "method": self.method,
            "rng": self.rng.bit_generator.state,
            "evals": self.evals,
            "elapsed": self.elapsed,
            "entries": [list(asdict(e).values()) for e in rec.entries],
            "best_score": rec.best_score if rec.best_values is not None else None,
            "completed": rec.completed,
        }
        arrays = {}
        if rec.best_values is not None:
            arrays["best_values"] = rec.best_values
        if rec.final_values is not None:
            arrays["final_values"] = rec.final_values
        return meta, arrays

    def load_state(self, meta: dict, arrays: dict[str, np.ndarray]) -> None:
        if meta["method"] != self.method:
            raise ValueError(f"checkpoint is for method {meta['method']!r}, not {self.method!r}")
        self.rng.bit_generator.state = meta["rng"]
        self.evals = meta["evals"]
        self.elapsed = meta["elapsed"]
        rec = self.record
        rec.entries = [UpdateEntry(*row) for row in meta["entries"]]
        rec.best_score = -math.inf if meta["best_score"] is None else meta["best_score"]
        rec.best_values = arrays.get("best_values")
        rec.final_values = arrays.get("final_values")
        rec.completed = meta["completed"]


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(SEED_BOUND))


@dataclass
class GroupLearner:
    """Policy, optimizer and baseline for one attribute group."""

    policy: MlpPolicy
    adam: AdamState
    baseline: EmaBaseline

    @classmethod
    def create(cls, head_sizes, config: SdrConfig, rng):
        policy = MlpPolicy(len(head_sizes), head_sizes, config.hidden, rng)
        return cls(policy, AdamState.for_policy(policy, config.learning_rate), EmaBaseline(0.0, config.baseline_decay))


class SdrRun(_Run):
    """Group-wise coordinate descent: one policy per group, trained in plan order.

    While group ``i`` trains, groups before it sit at their greedy values and
    groups after it at a context vector drawn once per run (or ``context_init``).
    """

    method = "sdr"

    def __init__(self, space: AttributeSpace, plan: GroupPlan, evaluator, config: SdrConfig | None = None,
                 rng: np.random.Generator | int | None = None, context_init=None, record_wall_time: bool = True):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        super().__init__(space, evaluator, rng, record_wall_time)
        self.config = config = config or SdrConfig()
        plan = GroupPlan(plan.groups if isinstance(plan, GroupPlan) else plan).validated(len(space))
        if config.single_group:
            plan = GroupPlan.single(len(space))
        if config.shuffle_groups:
            plan = plan.shuffled(rng)
        self.plan = self.record.plan = plan
        if context_init is None:
            self.context = space.sample(rng)
        else:
            self.context = space.check(np.array(context_init, dtype=float))
        self.learners = []
        if config.group_search == "policy":
            self.learners = [GroupLearner.create([space[i].num_bins for i in g], config, rng) for g in plan]
        self.pass_idx = self.group_idx = self.update_idx = 0
        self.step_count = 0

    @property
    def done(self):
        return self.pass_idx >= self.config.passes

    def _advance_group(self):
        self.update_idx = 0
        self.group_idx += 1
        if self.group_idx == len(self.plan):
            self.group_idx = 0
            self.pass_idx += 1
            if self.done:
                self.record.final_values = self.context.copy()

    def _step(self):
        g = self.group_idx
        idx = list(self.plan[g])
        sub = self.space.subset(idx)
        if self.config.group_search == "exhaustive":
            seed = _seed(self.rng)
            best, best_bins, rewards = -math.inf, None, []
            for bins in itertools.product(*(range(k) for k in sub.num_bins)):
                values = self.context.copy()
                values[idx] = sub.centers(bins)
                r = self._eval(values, seed)
                rewards.append(r)
                if r > best:
                    best, best_bins = r, bins
            self.context[idx] = sub.centers(best_bins)
            self._log(self.step_count, g, rewards)
            self.step_count += 1
            self._advance_group()
            return

        learner = self.learners[g]
        inputs = self.rng.random(len(idx))
        probs = forward(learner.policy, inputs)
        episodes = []
        for _ in range(self.config.samples_per_update):
            bins, logp = sample_bins(probs, self.rng)
            values = self.context.copy()
            values[idx] = sub.centers(bins)
            r = self._eval(values, _seed(self.rng))
            episodes.append(Episode(inputs, bins, logp, r))
        mean_r = float(np.mean([e.reward for e in episodes]))
        if self.config.baseline_first:
            baseline_update(learner.baseline, mean_r)
            reinforce_update(learner.policy, learner.adam, episodes, learner.baseline)
        else:
            reinforce_update(learner.policy, learner.adam, episodes, learner.baseline)
            baseline_update(learner.baseline, mean_r)
        self._log(self.step_count, g, [e.reward for e in episodes])
        self.step_count += 1
        self.update_idx += 1
        if self.update_idx == self.config.updates_per_group:
            test_input = self.rng.random(len(idx))
            self.context[idx] = sub.centers(greedy_bins(forward(learner.policy, test_input)))
            self._advance_group()

    def group_probabilities(self, g: int, inputs=None) -> list[np.ndarray]:
        inputs = np.full(len(self.plan[g]), 0.5) if inputs is None else inputs
        return forward(self.learners[g].policy, inputs)

    def state_dict(self):
        meta, arrays = super().state_dict()
        meta.update(cursor=[self.pass_idx, self.group_idx, self.update_idx, self.step_count],
                    plan=[list(g) for g in self.plan],
                    learners=[{"baseline": L.baseline.value, "adam_step": L.adam.step} for L in self.learners])
        arrays["context"] = self.context
        for gi, L in enumerate(self.learners):
            for pi, (p, m, v) in enumerate(zip(L.policy.params, L.adam.m, L.adam.v)):
                arrays[f"g{gi}_p{pi}"] = p
                arrays[f"g{gi}_m{pi}"] = m
                arrays[f"g{gi}_v{pi}"] = v
        return meta, arrays

    def load_state(self, meta, arrays):
        super().load_state(meta, arrays)
        if [list(g) for g in self.plan] != meta["plan"]:
            raise ValueError("checkpoint group plan does not match this run")
        self.pass_idx, self.group_idx, self.update_idx, self.step_count = meta["cursor"]
        self.context = np.array(arrays["context"], dtype=float)
        if len(meta["learners"]) != len(self.learners):
            raise ValueError("checkpoint learner count does not match this run")
        for gi, (L, lm) in enumerate(zip(self.learners, meta["learners"])):
            L.baseline.value = lm["baseline"]
            L.adam.step = lm["adam_step"]
            for pi in range(len(L.policy.params)):
                for dst, key in ((L.policy.params, "p"), (L.adam.m, "m"), (L.adam.v, "v")):
                    src = arrays[f"g{gi}_{key}{pi}"]
                    if src.shape != dst[pi].shape:
                        raise ValueError(f"checkpoint array g{gi}_{key}{pi} has shape {src.shape}")
                    dst[pi] = np.array(src, dtype=float)


def optimize_group(group_index: int, plan: GroupPlan, context, space: AttributeSpace, evaluator,
                   config: SdrConfig | None = None, rng=None):
    """Train one group's policy with every other attribute held at ``context``.

    Returns ``(learner, greedy_values, record)``; ``greedy_values`` are the
    group's argmax bin centers and ``record`` holds only this group's updates.
    """
    config = replace(config or SdrConfig(), single_group=False, shuffle_groups=False, passes=1,
                     group_search="policy")
    run = SdrRun(space, plan, evaluator, config, rng, context_init=context, record_wall_time=False)
    if not 0 <= group_index < len(run.plan):
        raise ValueError(f"group index {group_index} outside plan of {len(run.plan)} groups")
    run.group_idx = group_index
    while run.group_idx == group_index and not run.done:
        run.step()
    run.record.final_values = run.context.copy()
    return run.learners[group_index], run.context[list(run.plan[group_index])], run.record


def run_sdr(space: AttributeSpace, plan: GroupPlan, evaluator, config: SdrConfig | None = None,
            rng=None, context_init=None, record_wall_time: bool = True) -> RunRecord:
    return SdrRun(space, plan, evaluator, config, rng, context_init, record_wall_time).run()


class AttributeDescentRun(_Run):
    """Greedy coordinate search: each attribute in turn tries all its bin centers."""

    method = "attribute_descent"

    def __init__(self, space, evaluator, context_init=None, passes: int = 1, rng=None,
                 order: Sequence[int] | None = None, record_wall_time: bool = True):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        super().__init__(space, evaluator, rng, record_wall_time)
        if passes < 1:
            raise ValueError("passes must be >= 1")
        self.passes = passes
        self.order = list(range(len(space))) if order is None else [int(i) for i in order]
        self.context = space.check(space.mid_centers() if context_init is None else np.array(context_init, float))
        self.cursor = 0

    @property
    def done(self):
        return self.cursor >= self.passes * len(self.order)

    def _step(self):
        i = self.order[self.cursor % len(self.order)]
        spec = self.space[i]
        seed = _seed(self.rng)
        best, best_v, rewards = -math.inf, None, []
        for c in spec.centers():
            values = self.context.copy()
            values[i] = c
            r = self._eval(values, seed)
            rewards.append(r)
            if r > best:
                best, best_v = r, c
        self.context[i] = best_v
        self._log(self.cursor, i, rewards)
        self.cursor += 1
        if self.done:
            self.record.final_values = self.context.copy()

    def state_dict(self):
        meta, arrays = super().state_dict()
        meta["cursor"] = self.cursor
        arrays["context"] = self.context
        return meta, arrays

    def load_state(self, meta, arrays):
        super().load_state(meta, arrays)
        self.cursor = meta["cursor"]
        self.context = np.array(arrays["context"], dtype=float)


def attribute_descent(space, evaluator, context_init=None, passes: int = 1, rng=None,
                      record_wall_time: bool = True) -> RunRecord:
    return AttributeDescentRun(space, evaluator, context_init, passes, rng,
                               record_wall_time=record_wall_time).run()


class RandomSearchRun(_Run):
    """``budget`` independent uniform samples; the best one wins.

    With ``snap=True`` samples are uniform over bins and evaluated at bin centers.
    """

    method = "random_search"

    def __init__(self, space, evaluator, budget: int, rng=None, snap: bool = False, record_wall_time: bool = True):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        super().__init__(space, evaluator, rng, record_wall_time)
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.budget = int(budget)
        self.snap = snap

    @property
    def done(self):
        return self.evals >= self.budget

    def _draw(self):
        return self.space.centers(self.space.sample_bins(self.rng)) if self.snap else self.space.sample(self.rng)

    def _step(self):
        values = self._draw()
        r = self._eval(values, _seed(self.rng))
        self._log(self.evals - 1, 0, [r])
        if self.done:
            self.record.final_values = self.record.best_values.copy()


class RandomAttributesRun(RandomSearchRun):
    """A single uniformly random attribute vector (the untrained baseline)."""

    method = "random_attributes"

    def __init__(self, space, evaluator, rng=None, record_wall_time: bool = True):
        super().__init__(space, evaluator, 1, rng, record_wall_time=record_wall_time)


def random_search(space, evaluator, budget: int, rng=None, snap: bool = False,
                  record_wall_time: bool = True) -> RunRecord:
    return RandomSearchRun(space, evaluator, budget, rng, snap, record_wall_time).run()


def random_attributes(space, evaluator, rng=None, record_wall_time: bool = True) -> RunRecord:
    return RandomAttributesRun(space, evaluator, rng, record_wall_time).run()


def exhaustive_search(space: AttributeSpace, evaluator, cap: int = 10**5, seed: int = 0):
    """Evaluate every bin-center combination; returns ``(best_bins, best_score)``.

    Ties go to the lexicographically smallest bin vector.
    """
    if space.cardinality() > cap:
        raise ValueError(f"search space has {space.cardinality()} combinations, above the cap of {cap}")
    best, best_bins = -math.inf, None
    for bins in itertools.product(*(range(k) for k in space.num_bins)):
        r = call_evaluator(evaluator, space.centers(bins), seed)
        if r > best:
            best, best_bins = r, np.array(bins, dtype=int)
    return best_bins, best


class ExhaustiveRun(_Run):
    """Full enumeration as a logged run (one row per evaluation)."""

    method = "exhaustive"

    def __init__(self, space, evaluator, cap: int = 10**5, rng=None, record_wall_time: bool = True):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        super().__init__(space, evaluator, rng, record_wall_time)
        if space.cardinality() > cap:
            raise ValueError(f"search space has {space.cardinality()} combinations, above the cap of {cap}")
        self.total = space.cardinality()
        self.seed = _seed(rng)

    @property
    def done(self):
        return self.evals >= self.total

    def _step(self):
        bins = np.unravel_index(self.evals, self.space.num_bins)
        r = self._eval(self.space.centers(bins), self.seed)
        self._log(self.evals - 1, 0, [r])
        if self.done:
            self.record.final_values = self.record.best_values.copy()


@dataclass
class BudgetReport:
    n_attributes: int
    n_groups: int
    sdr_evaluations: int
    attribute_descent_evaluations: int
    search_space: int
    instance_space: int | None = None
    global_space: int | None = None

    def lines(self) -> list[str]:
        out = [f"attributes                    {self.n_attributes}",
               f"groups                        {self.n_groups}",
               f"SDR evaluations               {self.sdr_evaluations}",
               f"attribute descent evaluations {self.attribute_descent_evaluations}",
               f"discrete search space         {self.search_space}"]
        if self.instance_space is not None:
            out.append(f"instance-level space          {self.instance_space}")
        if self.global_space is not None:
            out.append(f"global-level space            {self.global_space}")
        return out


def budget_report(space: AttributeSpace, plan: GroupPlan, config: SdrConfig | None = None,
                  descent_passes: int = 1, s_x: int | None = None, s_y: int | None = None,
                  density_range: int | None = None, n_classes: int | None = None,
                  objects_per_class: Sequence[int] | None = None) -> BudgetReport:
    """Theoretical evaluation counts and search-space sizes.

    The optional scene-layout arguments give the illustrative comparison of
    placing every object individually, ``prod_i (s_x * s_y) ** n_i``, against
    placing each class on a line, ``(s_x * density_range) ** n_classes``.
    """
    config = config or SdrConfig()
    n_groups = 1 if config.single_group else len(plan)
    if config.group_search == "exhaustive":
        groups = [range(len(space))] if config.single_group else plan.groups
        per_pass = sum(math.prod(space[i].num_bins for i in g) for g in groups)
    else:
        per_pass = n_groups * config.updates_per_group * config.samples_per_update
    instance = None
    if s_x is not None and s_y is not None and objects_per_class is not None:
        instance = math.prod((s_x * s_y) ** int(n) for n in objects_per_class)
    glob = None
    if s_x is not None and density_range is not None and n_classes is not None:
        glob = (s_x * density_range) ** n_classes
    return BudgetReport(len(space), n_groups, config.passes * per_pass,
                        descent_passes * sum(space.num_bins), space.cardinality(), instance, glob)
