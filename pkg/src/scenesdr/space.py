"""Attribute search space: continuous ranges, their discretization into bins,
and the bounded jitter ("relaxation") applied on top of a chosen bin.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FAMILIES = ("environment", "position", "density")


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    lo: float
    hi: float
    num_bins: int = 10
    family: str = "environment"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"attribute {self.name!r}: need lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.num_bins) != self.num_bins or self.num_bins < 2:
            raise ValueError(f"attribute {self.name!r}: num_bins must be an integer >= 2")
        if self.family not in FAMILIES:
            raise ValueError(f"attribute {self.name!r}: unknown family {self.family!r}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.num_bins

    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.num_bins) + 0.5) * self.bin_width


def bin_center(spec: AttributeSpec, k: int) -> float:
    if not 0 <= k < spec.num_bins:
        raise ValueError(f"bin {k} out of range for {spec.name!r} ({spec.num_bins} bins)")
    return spec.lo + (k + 0.5) * (spec.hi - spec.lo) / spec.num_bins


def value_to_bin(spec: AttributeSpec, v: float) -> int:
    if not spec.lo <= v <= spec.hi:
        raise ValueError(f"value {v} outside [{spec.lo}, {spec.hi}] for {spec.name!r}")
    k = int(np.floor((v - spec.lo) / (spec.hi - spec.lo) * spec.num_bins))
    return min(k, spec.num_bins - 1)


def jitter(spec: AttributeSpec, v: float, rng: np.random.Generator, half_width_frac: float) -> float:
    """Add uniform noise of +-half_width_frac bin widths to ``v``, clamped to the range."""
    if not 0.0 <= half_width_frac <= 0.5:
        raise ValueError("half_width_frac must lie in [0, 0.5]")
    h = half_width_frac * spec.bin_width
    u = rng.uniform(-h, h) if h > 0 else 0.0
    return float(min(max(v + u, spec.lo), spec.hi))


def relax(spec: AttributeSpec, k: int, rng: np.random.Generator, half_width_frac: float = 0.5) -> float:
    """Relaxed value for bin ``k``: its center plus bounded uniform jitter."""
    return jitter(spec, bin_center(spec, k), rng, half_width_frac)


def sample_uniform(specs: Sequence[AttributeSpec], rng: np.random.Generator) -> np.ndarray:
    if len(specs) == 0:
        raise ValueError("need at least one attribute spec")
    lo = np.array([s.lo for s in specs])
    hi = np.array([s.hi for s in specs])
    return rng.uniform(lo, hi)


class AttributeSpace:
    """An ordered, name-unique collection of attribute specs.

    Attribute vectors are plain float arrays in raw attribute units, one
    entry per spec; bin vectors are integer arrays.
    """

    def __init__(self, specs: Iterable[AttributeSpec]):
        self.specs = tuple(specs)
        if not self.specs:
            raise ValueError("empty attribute space")
        names = [s.name for s in self.specs]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ValueError(f"duplicate attribute names: {sorted(dup)}")
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __getitem__(self, i):
        return self.specs[i]

    def __eq__(self, other):
        return isinstance(other, AttributeSpace) and self.specs == other.specs

    def __repr__(self):
        return f"AttributeSpace({len(self)} attributes)"

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    @property
    def num_bins(self) -> list[int]:
        return [s.num_bins for s in self.specs]

    @property
    def lo(self) -> np.ndarray:
        return np.array([s.lo for s in self.specs])

    @property
    def hi(self) -> np.ndarray:
        return np.array([s.hi for s in self.specs])

    def index(self, name: str) -> int:
        return self._index[name]

    def subset(self, idx: Sequence[int]) -> "AttributeSpace":
        return AttributeSpace(self.specs[i] for i in idx)

    def family_indices(self, family: str) -> list[int]:
        return [i for i, s in enumerate(self.specs) if s.family == family]

    def cardinality(self) -> int:
        """Number of distinct bin combinations (exact integer)."""
        n = 1
        for s in self.specs:
            n *= s.num_bins
        return n

    def check(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} attribute values, got shape {values.shape}")
        bad = (values < self.lo) | (values > self.hi) | ~np.isfinite(values)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            s = self.specs[i]
            raise ValueError(f"{s.name}={values[i]} outside [{s.lo}, {s.hi}]")
        return values

    def centers(self, bins) -> np.ndarray:
        return np.array([bin_center(s, int(k)) for s, k in zip(self.specs, bins)])

    def to_bins(self, values) -> np.ndarray:
        return np.array([value_to_bin(s, float(v)) for s, v in zip(self.specs, values)], dtype=int)

    def mid_centers(self) -> np.ndarray:
        """Center of bin ``num_bins // 2`` for every attribute."""
        return self.centers([s.num_bins // 2 for s in self.specs])

    def midpoints(self) -> np.ndarray:
        return (self.lo + self.hi) / 2

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_uniform(self.specs, rng)

    def sample_bins(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.integers(s.num_bins) for s in self.specs], dtype=int)

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.lo) / (self.hi - self.lo)

    def jitter(self, values, rng: np.random.Generator, half_width_frac: float) -> np.ndarray:
        return np.array([jitter(s, float(v), rng, half_width_frac) for s, v in zip(self.specs, values)])

    def jitter_many(self, values, rng: np.random.Generator, half_width_frac: float, m: int) -> np.ndarray:
        """``m`` independently jittered copies of ``values``, shape ``(m, N)``."""
        if not 0.0 <= half_width_frac <= 0.5:
            raise ValueError("half_width_frac must lie in [0, 0.5]")
        h = half_width_frac * (self.hi - self.lo) / np.array(self.num_bins)
        u = rng.uniform(-1.0, 1.0, size=(m, len(self)))
        return np.clip(np.asarray(values, dtype=float) + u * h, self.lo, self.hi)


@dataclass(frozen=True)
class GroupPlan:
    """Ordered partition of attribute indices; each group is optimized jointly."""

    groups: tuple[tuple[int, ...], ...]

    def __init__(self, groups):
        object.__setattr__(self, "groups", tuple(tuple(int(i) for i in g) for g in groups))

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, i):
        return self.groups[i]

    @classmethod
    def single(cls, n: int) -> "GroupPlan":
        return cls([range(n)])

    @classmethod
    def singletons(cls, n: int) -> "GroupPlan":
        return cls([[i] for i in range(n)])

    def validated(self, n_attributes: int) -> "GroupPlan":
        problem = validate_group_plan(self, n_attributes)
        if problem is not None:
            raise ValueError(problem)
        return self

    def shuffled(self, rng: np.random.Generator) -> "GroupPlan":
        """Same group sizes, attributes randomly reassigned across groups."""
        perm = rng.permutation([i for g in self.groups for i in g])
        out, pos = [], 0
        for g in self.groups:
            out.append(sorted(int(i) for i in perm[pos:pos + len(g)]))
            pos += len(g)
        return GroupPlan(out)

    def restricted(self, keep: Sequence[int]) -> "GroupPlan":
        """Plan over the attributes in ``keep``, re-indexed to their positions in ``keep``."""
        pos = {int(old): new for new, old in enumerate(keep)}
        groups = [[pos[i] for i in g if i in pos] for g in self.groups]
        return GroupPlan([g for g in groups if g])


def validate_group_plan(plan, n_attributes: int) -> str | None:
    """Return ``None`` for a disjoint exhaustive partition of ``range(n_attributes)``,
    otherwise a description of the first violated condition."""
    groups = plan.groups if isinstance(plan, GroupPlan) else plan
    seen: set[int] = set()
    for gi, g in enumerate(groups):
        if len(g) == 0:
            return f"group {gi} is empty"
        for i in g:
            if not 0 <= i < n_attributes:
                return f"group {gi}: index {i} outside 0..{n_attributes - 1}"
            if i in seen:
                return f"group {gi}: index {i} overlaps an earlier group"
            seen.add(i)
    missing = sorted(set(range(n_attributes)) - seen)
    if missing:
        return f"missing indices {missing}"
    return None
