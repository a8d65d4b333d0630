"""Experiment runner: INI configs, repeated runs, method comparisons, ablations
and resumable checkpoints.

Output layout under ``output``::

    config.ini
    <label>/rep<k>/updates.csv      update,group,mean_reward,best_reward,evals,wall_ms
    <label>/rep<k>/summary.json
    <label>/rep<k>/checkpoint.npz
    report.csv, report.txt           (compare / ablate / report)

``<label>`` is the method name for ``run``/``compare`` and the ablation name
(``sdr`` for the unablated run) for ``ablate``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import benchmarks
from .checkpoint import CheckpointError, load, restore_run, save_run
from .optim import (AttributeDescentRun, EvaluationError, ExhaustiveRun, RandomAttributesRun, RandomSearchRun,
                    SdrConfig, SdrRun, budget_report)
from .space import FAMILIES, AttributeSpace, GroupPlan, validate_group_plan

log = logging.getLogger("scenesdr")

METHODS = ("sdr", "attribute_descent", "random_search", "random_attributes", "exhaustive")
ABLATIONS = ("no_relaxation", "single_group", "shuffle_groups", "drop_environment", "drop_position", "drop_density")
CONTEXTS = ("random", "mid", "adverse")
SPACE_BENCHMARKS = ("line11", "line23")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # [experiment]
    benchmark: str = "line23"
    method: str = "sdr"
    methods: tuple[str, ...] = ()
    seed: int = 0
    reps: int = 1
    budget: int = 0
    equal_budget: bool = False
    ablations: tuple[str, ...] = ()
    output: str = "runs"
    checkpoint_every: int = 10
    record_wall_time: bool = True
    # [scene]
    m_train: int = 180
    m_val: int = 180
    m_test: int = 180
    num_bins: int = 10
    target_seed: int = 12345
    target_spread: float = 0.0
    # [space]
    attributes: tuple[str, ...] = ()
    groups: tuple[tuple[str, ...], ...] = ()
    ranges: dict = field(default_factory=dict)
    # [sdr]
    sdr: SdrConfig = field(default_factory=SdrConfig)
    sdr_context: str = "random"
    # [baselines]
    descent_passes: int = 1
    descent_context: str = "mid"
    random_snap: bool = False
    exhaustive_cap: int = 100000

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ExperimentConfig":
        if self.benchmark not in benchmarks.BENCHMARKS:
            raise ConfigError(f"[experiment] benchmark: unknown benchmark {self.benchmark!r} "
                              f"(choose from {', '.join(benchmarks.BENCHMARKS)})")
        for m in (self.method, *self.methods):
            if m not in METHODS:
                raise ConfigError(f"[experiment] method: unknown method {m!r} (choose from {', '.join(METHODS)})")
        for a in self.ablations:
            if a not in ABLATIONS:
                raise ConfigError(f"[experiment] ablations: unknown flag {a!r} (choose from {', '.join(ABLATIONS)})")
        if self.reps < 1:
            raise ConfigError("[experiment] reps: need at least one repetition seed")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("[experiment] seed: must be an unsigned 64-bit integer")
        if self.budget < 0:
            raise ConfigError("[experiment] budget: must be >= 0 (0 = automatic)")
        if self.checkpoint_every < 1:
            raise ConfigError("[experiment] checkpoint_every: must be >= 1")
        for key in ("m_train", "m_val", "m_test"):
            if getattr(self, key) < 1:
                raise ConfigError(f"[scene] {key}: must be >= 1")
        if self.num_bins < 2:
            raise ConfigError("[scene] num_bins: must be >= 2")
        if not 0.0 <= self.target_spread <= 1.0:
            raise ConfigError("[scene] target_spread: must lie in [0, 1]")
        if self.sdr_context not in CONTEXTS:
            raise ConfigError(f"[sdr] context: expected one of {', '.join(CONTEXTS)}")
        if self.descent_context not in CONTEXTS:
            raise ConfigError(f"[baselines] descent_context: expected one of {', '.join(CONTEXTS)}")
        if self.descent_passes < 1:
            raise ConfigError("[baselines] descent_passes: must be >= 1")
        if self.benchmark not in SPACE_BENCHMARKS and (self.attributes or self.groups or self.ranges):
            raise ConfigError(f"[space] attribute overrides only apply to {' and '.join(SPACE_BENCHMARKS)}")
        for name, (lo, hi) in self.ranges.items():
            if not lo < hi:
                raise ConfigError(f"[space] range.{name}: need lo < hi")
        return self

    # --- INI round trip ---------------------------------------------------
    def to_ini(self) -> str:
        s = self.sdr
        sections = {
            "experiment": {
                "benchmark": self.benchmark, "method": self.method, "methods": _list(self.methods),
                "seed": str(self.seed), "reps": str(self.reps), "budget": str(self.budget),
                "equal_budget": _bool(self.equal_budget), "ablations": _list(self.ablations),
                "output": self.output, "checkpoint_every": str(self.checkpoint_every),
                "record_wall_time": _bool(self.record_wall_time),
            },
            "scene": {
                "m_train": str(self.m_train), "m_val": str(self.m_val), "m_test": str(self.m_test),
                "num_bins": str(self.num_bins), "target_seed": str(self.target_seed),
                "target_spread": repr(self.target_spread),
            },
            "space": {
                "attributes": _list(self.attributes), "groups": "; ".join(_list(g) for g in self.groups),
                **{f"range.{k}": f"{lo!r}, {hi!r}" for k, (lo, hi) in sorted(self.ranges.items())},
            },
            "sdr": {
                "samples_per_update": str(s.samples_per_update), "updates_per_group": str(s.updates_per_group),
                "learning_rate": repr(s.learning_rate), "half_width_frac": repr(s.half_width_frac),
                "hidden": _list(str(h) for h in s.hidden), "baseline_decay": repr(s.baseline_decay),
                "baseline_first": _bool(s.baseline_first), "passes": str(s.passes),
                "no_relaxation": _bool(s.no_relaxation), "single_group": _bool(s.single_group),
                "shuffle_groups": _bool(s.shuffle_groups), "group_search": s.group_search,
                "context": self.sdr_context,
            },
            "baselines": {
                "descent_passes": str(self.descent_passes), "descent_context": self.descent_context,
                "random_snap": _bool(self.random_snap), "exhaustive_cap": str(self.exhaustive_cap),
            },
        }
        buf = io.StringIO()
        for name, items in sections.items():
            buf.write(f"[{name}]\n")
            for k, v in items.items():
                buf.write(f"{k} = {v}\n".replace(" = \n", " =\n"))
            buf.write("\n")
        return buf.getvalue()


def _list(items) -> str:
    return ", ".join(items)


def _bool(b: bool) -> str:
    return "true" if b else "false"


def _split(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


# key -> (target, converter); targets starting with "sdr." go into SdrConfig
_SCHEMA = {
    "experiment": {
        "benchmark": ("benchmark", str), "method": ("method", str), "methods": ("methods", _split),
        "seed": ("seed", int), "reps": ("reps", int), "budget": ("budget", int),
        "equal_budget": ("equal_budget", "bool"), "ablations": ("ablations", _split), "output": ("output", str),
        "checkpoint_every": ("checkpoint_every", int), "record_wall_time": ("record_wall_time", "bool"),
    },
    "scene": {
        "m_train": ("m_train", int), "m_val": ("m_val", int), "m_test": ("m_test", int),
        "num_bins": ("num_bins", int), "target_seed": ("target_seed", int), "target_spread": ("target_spread", float),
    },
    "space": {
        "attributes": ("attributes", _split),
        "groups": ("groups", lambda t: tuple(_split(g) for g in t.split(";") if g.strip())),
    },
    "sdr": {
        "samples_per_update": ("sdr.samples_per_update", int), "updates_per_group": ("sdr.updates_per_group", int),
        "learning_rate": ("sdr.learning_rate", float), "half_width_frac": ("sdr.half_width_frac", float),
        "hidden": ("sdr.hidden", lambda t: tuple(int(h) for h in _split(t))),
        "baseline_decay": ("sdr.baseline_decay", float), "baseline_first": ("sdr.baseline_first", "bool"),
        "passes": ("sdr.passes", int), "no_relaxation": ("sdr.no_relaxation", "bool"),
        "single_group": ("sdr.single_group", "bool"), "shuffle_groups": ("sdr.shuffle_groups", "bool"),
        "group_search": ("sdr.group_search", str), "context": ("sdr_context", str),
    },
    "baselines": {
        "descent_passes": ("descent_passes", int), "descent_context": ("descent_context", str),
        "random_snap": ("random_snap", "bool"), "exhaustive_cap": ("exhaustive_cap", int),
    },
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text; unknown sections or keys and bad values raise ``ConfigError``."""
    cp = configparser.ConfigParser(interpolation=None, empty_lines_in_values=False, inline_comment_prefixes=(";",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    top, sdr, ranges = {}, {}, {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in cp[section].items():
            if section == "space" and key.startswith("range."):
                try:
                    lo, hi = (float(v) for v in _split(raw))
                except ValueError:
                    raise ConfigError(f"[space] {key}: expected 'lo, hi'") from None
                ranges[key[len("range."):]] = (lo, hi)
                continue
            if key not in _SCHEMA[section]:
                raise ConfigError(f"[{section}] {key}: unknown key")
            target, conv = _SCHEMA[section][key]
            try:
                value = cp[section].getboolean(key) if conv == "bool" else conv(raw.strip())
            except ValueError:
                raise ConfigError(f"[{section}] {key}: invalid value {raw!r}") from None
            if target.startswith("sdr."):
                sdr[target[4:]] = value
            else:
                top[target] = value
    try:
        sdr_cfg = SdrConfig(**sdr)
    except ValueError as exc:
        raise ConfigError(f"[sdr] {exc}") from None
    return ExperimentConfig(**top, ranges=ranges, sdr=sdr_cfg)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def rep_seeds(master: int, reps: int) -> list[int]:
    """Per-repetition seeds derived from the master seed."""
    return [int(s) for s in np.random.SeedSequence(master).generate_state(reps, dtype=np.uint64)]


# --- problems -----------------------------------------------------------------

class PinnedEvaluator:
    """Evaluate a sub-vector by writing it into a full vector whose other
    entries stay at fixed values."""

    def __init__(self, inner, full_values, keep):
        self.inner = inner
        self.full = np.asarray(full_values, dtype=float)
        self.keep = list(keep)

    def expand(self, values) -> np.ndarray:
        out = self.full.copy()
        out[self.keep] = values
        return out

    def evaluate(self, values, seed):
        return self.inner.evaluate(self.expand(values), seed)


def _line_plan(groups, space: AttributeSpace) -> list[list[int]]:
    if groups:
        try:
            plan = [[space.index(n) for n in g] for g in groups]
        except KeyError as exc:
            raise ConfigError(f"[space] groups: unknown attribute {exc.args[0]!r}") from None
    else:
        plan = [space.family_indices(f) for f in ("position", "density", "environment")]
        plan = [g for g in plan if g]
    err = validate_group_plan(plan, len(space))
    if err is not None:
        raise ConfigError(f"[space] groups: {err}")
    return plan


def build_problem(cfg: ExperimentConfig, half_width_frac: float | None = None) -> benchmarks.Problem:
    """The benchmark named in ``cfg`` with the evaluator's relaxation set from the SDR settings."""
    hw = cfg.sdr.relaxation if half_width_frac is None else half_width_frac
    if cfg.benchmark.startswith("toy"):
        return benchmarks.BENCHMARKS[cfg.benchmark]()
    kw = dict(num_bins=cfg.num_bins, m_train=cfg.m_train, m_val=cfg.m_val, m_test=cfg.m_test,
              half_width_frac=hw, target_seed=cfg.target_seed, target_spread=cfg.target_spread)
    if cfg.benchmark not in SPACE_BENCHMARKS or not (cfg.attributes or cfg.groups or cfg.ranges):
        return benchmarks.BENCHMARKS[cfg.benchmark](**kw)
    names = list(cfg.attributes) or (benchmarks.NAMES_23 if cfg.benchmark == "line23" else benchmarks.NAMES_11)
    try:
        specs = AttributeSpace(benchmarks.scene_spec(n, cfg.num_bins, cfg.ranges) for n in names)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[space] attributes: {exc}") from None
    for n in cfg.ranges:
        if n not in specs.names:
            raise ConfigError(f"[space] range.{n}: not an attribute of this space")
    plan = _line_plan(cfg.groups, specs) if (cfg.groups or cfg.attributes) else \
        (benchmarks.plan_23() if cfg.benchmark == "line23" else benchmarks.plan_11())
    return benchmarks.line_scene_problem(cfg.benchmark, names, plan, ranges=cfg.ranges, **kw)


def drop_family(problem: benchmarks.Problem, family: str) -> benchmarks.Problem:
    """Remove one attribute family from the search; its attributes sit at their range midpoints."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    space = problem.space
    keep = [i for i in range(len(space)) if space[i].family != family]
    if not keep:
        raise ValueError(f"dropping {family} leaves no attributes to search")
    full = space.midpoints()
    sub = space.subset(keep)
    adverse = None if problem.adverse_context is None else problem.adverse_context[keep]
    return benchmarks.Problem(f"{problem.name}-{family}", sub, problem.plan.restricted(keep),
                              PinnedEvaluator(problem.evaluator, full, keep),
                              PinnedEvaluator(problem.test_evaluator, full, keep), adverse,
                              {**problem.info, "full_space": space, "keep": keep, "pinned": full})


def _context(kind: str, problem: benchmarks.Problem, rng: np.random.Generator):
    if kind == "mid":
        return problem.space.mid_centers()
    if kind == "adverse":
        return problem.adverse_context if problem.adverse_context is not None else problem.space.mid_centers()
    return problem.space.sample(rng)


def native_budget(cfg: ExperimentConfig, problem: benchmarks.Problem) -> int:
    return budget_report(problem.space, problem.plan, cfg.sdr).sdr_evaluations


def make_run(method: str, problem: benchmarks.Problem, cfg: ExperimentConfig, seed: int, equal_budget: bool = False):
    """Construct the resumable run object for one (method, seed) cell."""
    rng = np.random.default_rng(seed)
    wall = cfg.record_wall_time
    space, ev = problem.space, problem.evaluator
    budget = cfg.budget or native_budget(cfg, problem)
    if method == "sdr":
        ctx = None if cfg.sdr_context == "random" else _context(cfg.sdr_context, problem, rng)
        return SdrRun(space, problem.plan, ev, cfg.sdr, rng, ctx, wall)
    if method == "attribute_descent":
        passes = cfg.descent_passes
        if equal_budget:
            passes = max(1, budget // sum(space.num_bins))
        return AttributeDescentRun(space, ev, _context(cfg.descent_context, problem, rng), passes, rng,
                                   record_wall_time=wall)
    if method == "random_search":
        return RandomSearchRun(space, ev, budget, rng, cfg.random_snap, wall)
    if method == "random_attributes":
        return RandomAttributesRun(space, ev, rng, wall)
    if method == "exhaustive":
        try:
            return ExhaustiveRun(space, ev, cfg.exhaustive_cap, rng, wall)
        except ValueError as exc:
            raise ConfigError(f"[baselines] exhaustive_cap: {exc}") from None
    raise ConfigError(f"[experiment] method: unknown method {method!r}")


# --- cells ----------------------------------------------------------------------

@dataclass
class CellResult:
    label: str
    method: str
    rep: int
    seed: int
    status: str
    final_score: float | None = None
    best_reward: float | None = None
    evaluations: int = 0
    wall_s: float = 0.0
    error: str | None = None


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def _named(problem, values):
    if values is None:
        return None
    values = np.asarray(values, dtype=float)
    if "keep" in problem.info:
        values = problem.evaluator.expand(values)
        names = problem.info["full_space"].names
    else:
        names = problem.space.names
    return {n: float(v) for n, v in zip(names, values)}


def _ablation_problem(cfg: ExperimentConfig, label: str, base_cache: dict) -> tuple[ExperimentConfig, benchmarks.Problem]:
    """Config and problem for one ablation label (``sdr`` = unablated)."""
    if label in ("no_relaxation", "single_group", "shuffle_groups"):
        cfg = replace(cfg, sdr=replace(cfg.sdr, **{label: True}))
    key = cfg.sdr.relaxation
    if key not in base_cache:
        base_cache[key] = build_problem(cfg)
    problem = base_cache[key]
    if label.startswith("drop_"):
        try:
            problem = drop_family(problem, label[len("drop_"):])
        except ValueError as exc:
            raise ConfigError(f"ablation {label}: {exc}") from None
    return cfg, problem


def _cell_meta(cfg, label, method, rep, seed, equal_budget):
    return {"config": cfg.to_ini(), "cell": {"label": label, "method": method, "rep": rep, "seed": seed,
                                              "equal_budget": equal_budget}}


def run_cell(problem, cfg: ExperimentConfig, label: str, method: str, rep: int, seed: int, out_dir: Path,
             equal_budget: bool = False, run=None, max_steps: int | None = None) -> CellResult:
    """Run (or continue) one cell, checkpointing every ``checkpoint_every`` rows."""
    cell_dir = Path(out_dir) / label / f"rep{rep}"
    cell_dir.mkdir(parents=True, exist_ok=True)
    extra = _cell_meta(cfg, label, method, rep, seed, equal_budget)
    if run is None:
        run = make_run(method, problem, cfg, seed, equal_budget)
    ckpt, csv_path = cell_dir / "checkpoint.npz", cell_dir / "updates.csv"

    def flush():
        save_run(ckpt, run, extra)
        _write_atomic(csv_path, run.record.to_csv())

    def callback(r):
        if r.done or len(r.record.entries) % cfg.checkpoint_every == 0:
            flush()

    status, error = "completed", None
    try:
        steps = 0
        while not run.done and (max_steps is None or steps < max_steps):
            run.step()
            steps += 1
            callback(run)
        if not run.done:
            flush()
            status = "interrupted"
    except EvaluationError as exc:
        status, error = "failed", str(exc)
        _write_atomic(csv_path, run.record.to_csv())
        log.error("%s rep %d: %s", label, rep, exc)
    rec = run.record
    final_score = None
    if status == "completed" and rec.final_values is not None:
        final_score = problem.score(rec.final_values, seed)
    result = CellResult(label, method, rep, seed, status, final_score,
                        None if not rec.entries else rec.best_score, run.evals,
                        run.elapsed if cfg.record_wall_time else 0.0, error)
    summary = {**result.__dict__, "benchmark": cfg.benchmark,
               "best_values": _named(problem, rec.best_values), "final_values": _named(problem, rec.final_values)}
    if isinstance(run, SdrRun):
        summary["plan"] = [[run.space.names[i] for i in g] for g in run.plan]
    _write_atomic(cell_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("%s rep %d: %s, %d evaluations, final score %s", label, rep, status, run.evals,
             "n/a" if final_score is None else f"{final_score:.4f}")
    return result


# --- reports --------------------------------------------------------------------

@dataclass
class ComparisonReport:
    cells: list[CellResult]
    budget_mode: str = "native"

    @property
    def labels(self) -> list[str]:
        return list(dict.fromkeys(c.label for c in self.cells))

    def scores(self, label: str) -> list[float]:
        return [c.final_score for c in self.cells if c.label == label and c.final_score is not None]

    def median(self, label: str) -> float:
        s = self.scores(label)
        return float(np.median(s)) if s else math.nan

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if c.status != "completed"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "method", "rep", "seed", "status", "final_score", "best_reward", "evaluations",
                    "wall_s", "budget_mode"])
        for c in self.cells:
            w.writerow([c.label, c.method, c.rep, c.seed, c.status,
                        "" if c.final_score is None else repr(c.final_score),
                        "" if c.best_reward is None else repr(c.best_reward), c.evaluations,
                        f"{c.wall_s:.3f}", self.budget_mode])
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"budget mode: {self.budget_mode}",
                 f"{'label':<20} {'median':>8} {'min':>8} {'max':>8} {'evals':>8} {'wall_s':>8}  ok/total"]
        for label in self.labels:
            cells = [c for c in self.cells if c.label == label]
            s = self.scores(label)
            evals = int(np.median([c.evaluations for c in cells]))
            wall = float(np.median([c.wall_s for c in cells]))
            fmt = (lambda v: f"{v:8.4f}") if s else (lambda v: f"{'n/a':>8}")
            lines.append(f"{label:<20} {fmt(self.median(label))} {fmt(min(s) if s else 0)} "
                         f"{fmt(max(s) if s else 0)} {evals:8d} {wall:8.2f}  {len(s)}/{len(cells)}")
        for c in self.failed:
            lines.append(f"FAILED {c.label} rep {c.rep}: {c.status}{'' if not c.error else ' - ' + c.error}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        _write_atomic(out_dir / "report.csv", self.to_csv())
        _write_atomic(out_dir / "report.txt", self.table())


def _prepare(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "config.ini", cfg.to_ini())


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ComparisonReport:
    """Run ``cfg.method`` once per repetition seed."""
    out = Path(out_dir or cfg.output)
    _prepare(cfg, out)
    problem = build_problem(cfg)
    cells = [run_cell(problem, cfg, cfg.method, cfg.method, r, s, out, cfg.equal_budget)
             for r, s in enumerate(rep_seeds(cfg.seed, cfg.reps))]
    return ComparisonReport(cells, "equal" if cfg.equal_budget else "native")


def compare(cfg: ExperimentConfig, out_dir=None) -> ComparisonReport:
    """Every method in ``cfg.methods`` on the same problem and seeds."""
    methods = list(dict.fromkeys(cfg.methods))
    if len(methods) < 2:
        raise ConfigError("[experiment] methods: compare needs at least two methods")
    out = Path(out_dir or cfg.output)
    _prepare(cfg, out)
    problem = build_problem(cfg)
    seeds = rep_seeds(cfg.seed, cfg.reps)
    cells = [run_cell(problem, cfg, m, m, r, s, out, cfg.equal_budget) for m in methods for r, s in enumerate(seeds)]
    report = ComparisonReport(cells, "equal" if cfg.equal_budget else "native")
    report.write(out)
    return report


def ablate(cfg: ExperimentConfig, flags=None, out_dir=None) -> ComparisonReport:
    """Unablated SDR plus one SDR variant per flag, on shared seeds."""
    flags = list(dict.fromkeys(cfg.ablations if flags is None else flags))
    for f in flags:
        if f not in ABLATIONS:
            raise ConfigError(f"unknown ablation flag {f!r} (choose from {', '.join(ABLATIONS)})")
    out = Path(out_dir or cfg.output)
    _prepare(cfg, out)
    cache: dict = {}
    seeds = rep_seeds(cfg.seed, cfg.reps)
    cells = []
    for label in ["sdr", *flags]:
        c, problem = _ablation_problem(cfg, label, cache)
        cells += [run_cell(problem, c, label, "sdr", r, s, out) for r, s in enumerate(seeds)]
    report = ComparisonReport(cells, "native")
    report.write(out)
    return report


def resume(checkpoint_path, max_steps: int | None = None) -> CellResult | None:
    """Continue the cell a checkpoint belongs to; ``None`` if it had already finished.

    Any defect in the checkpoint raises ``CheckpointError`` before anything is written.
    """
    path = Path(checkpoint_path)
    meta, _ = load(path)
    try:
        cfg = parse_config(meta["config"])
        cell = meta["cell"]
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"{path}: checkpoint has no usable run description ({exc})") from None
    if meta.get("completed"):
        log.warning("%s: run already completed, nothing to do", path)
        return None
    label = cell["label"]
    if label == cell["method"]:
        c, problem = cfg, build_problem(cfg)
    else:
        c, problem = _ablation_problem(cfg, label, {})
    run = make_run(cell["method"], problem, c, cell["seed"], cell["equal_budget"])
    restore_run(path, run)
    out_dir = path.parent.parent.parent
    return run_cell(problem, c, label, cell["method"], cell["rep"], cell["seed"], out_dir, cell["equal_budget"],
                    run=run, max_steps=max_steps)


def collect(out_dir) -> ComparisonReport:
    """Rebuild a report from the ``summary.json`` files under ``out_dir``."""
    out = Path(out_dir)
    paths = sorted(out.glob("*/rep*/summary.json"), key=lambda p: (p.parent.parent.name, int(p.parent.name[3:])))
    if not paths:
        raise FileNotFoundError(f"no run summaries under {out}")
    names = {f.name for f in fields(CellResult)}
    cells = [CellResult(**{k: v for k, v in json.loads(p.read_text()).items() if k in names}) for p in paths]
    mode = "native"
    if (out / "config.ini").exists():
        mode = "equal" if load_config(out / "config.ini").equal_budget else "native"
    return ComparisonReport(cells, mode)


def budget_lines(cfg: ExperimentConfig, **layout) -> list[str]:
    problem = _space_only(cfg) if cfg.benchmark in SPACE_BENCHMARKS else build_problem(cfg)
    rep = budget_report(problem.space, problem.plan, cfg.sdr, cfg.descent_passes, **layout)
    return rep.lines()


@dataclass
class _SpaceOnly:
    space: AttributeSpace
    plan: GroupPlan


def _space_only(cfg: ExperimentConfig) -> _SpaceOnly:
    names = list(cfg.attributes) or (benchmarks.NAMES_23 if cfg.benchmark == "line23" else benchmarks.NAMES_11)
    space = AttributeSpace(benchmarks.scene_spec(n, cfg.num_bins, cfg.ranges) for n in names)
    if cfg.groups or cfg.attributes:
        plan = _line_plan(cfg.groups, space)
    else:
        plan = benchmarks.plan_23() if cfg.benchmark == "line23" else benchmarks.plan_11()
    return _SpaceOnly(space, GroupPlan(plan))
