"""Categorical MLP policy trained with REINFORCE.

The network maps a normalized attribute vector to one softmax head per
attribute. Everything is plain numpy in float64 so gradients can be checked
against finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


class MlpPolicy:
    """MLP with rectifier hidden layers and per-attribute softmax heads.

    ``head_sizes`` gives the bin count of every attribute; heads may differ in
    size. Weights are stored as ``(out, in)`` matrices.
    """

    def __init__(self, n_inputs: int, head_sizes: Sequence[int], hidden: Sequence[int] = (256, 256),
                 rng: np.random.Generator | None = None):
        self.head_sizes = tuple(int(k) for k in head_sizes)
        if n_inputs < 1 or not self.head_sizes or min(self.head_sizes) < 1:
            raise ValueError("policy needs >= 1 input and nonempty heads")
        self.n_inputs = int(n_inputs)
        self.hidden = tuple(int(h) for h in hidden)
        self.dims = (self.n_inputs, *self.hidden, sum(self.head_sizes))
        self._splits = np.cumsum(self.head_sizes)[:-1]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_heads(self) -> int:
        return len(self.head_sizes)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def zero_(self) -> "MlpPolicy":
        for p in self.params:
            p[...] = 0.0
        return self

    def copy(self) -> "MlpPolicy":
        new = object.__new__(MlpPolicy)
        new.__dict__.update(self.__dict__)
        new.params = [p.copy() for p in self.params]
        return new

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_inputs,):
            raise ValueError(f"policy expects input of length {self.n_inputs}, got shape {x.shape}")
        return x

    def _forward(self, x):
        acts, pre = [x], []
        h = x
        n_layers = len(self.params) // 2
        for li in range(n_layers):
            W, b = self.params[2 * li], self.params[2 * li + 1]
            z = W @ h + b
            pre.append(z)
            h = np.maximum(z, 0.0) if li < n_layers - 1 else z
            acts.append(h)
        return acts, pre

    def logits(self, x) -> list[np.ndarray]:
        acts, _ = self._forward(self._check_input(x))
        return np.split(acts[-1], self._splits)

    def log_probs(self, x) -> list[np.ndarray]:
        return [_log_softmax(z) for z in self.logits(x)]

    def grad_log_prob(self, x, bins) -> list[np.ndarray]:
        """Gradient of ``sum_rows log p(row, bins[row])`` w.r.t. every parameter."""
        x = self._check_input(x)
        bins = np.asarray(bins, dtype=int)
        if bins.shape != (self.n_heads,):
            raise ValueError(f"expected {self.n_heads} bins, got shape {bins.shape}")
        acts, pre = self._forward(x)
        # d log softmax_k / d z = onehot_k - p
        dz = np.concatenate([
            np.eye(k)[b] - np.exp(_log_softmax(z))
            for k, b, z in zip(self.head_sizes, bins, np.split(acts[-1], self._splits))
        ])
        n_layers = len(self.params) // 2
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        for li in reversed(range(n_layers)):
            W = self.params[2 * li]
            grads[2 * li] = np.outer(dz, acts[li])
            grads[2 * li + 1] = dz
            if li > 0:
                dz = (W.T @ dz) * (pre[li - 1] > 0)
        return grads


def forward(policy: MlpPolicy, x) -> list[np.ndarray]:
    """Per-attribute probability rows (the policy's categorical distributions)."""
    return [np.exp(lp) for lp in policy.log_probs(x)]


def sample_bins(probs: Sequence[np.ndarray], rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw one bin per row by inverse CDF; returns (bins, summed log-probability)."""
    u = rng.random(len(probs))
    bins = np.empty(len(probs), dtype=int)
    logp = 0.0
    for i, (p, ui) in enumerate(zip(probs, u)):
        k = min(int(np.searchsorted(np.cumsum(p), ui * p.sum(), side="right")), len(p) - 1)
        bins[i] = k
        logp += np.log(p[k])
    return bins, float(logp)


def greedy_bins(probs: Sequence[np.ndarray]) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest tied bin
    return np.array([int(np.argmax(p)) for p in probs], dtype=int)


def grad_log_prob(policy: MlpPolicy, x, bins) -> list[np.ndarray]:
    return policy.grad_log_prob(x, bins)


@dataclass
class AdamState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_policy(cls, policy: MlpPolicy, lr: float = 1e-2) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in policy.params],
                   v=[np.zeros_like(p) for p in policy.params])

    def ascend(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """One in-place Adam step in the direction of ``grads``."""
        self.step += 1
        c1 = 1 - self.beta1 ** self.step
        c2 = 1 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p += self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EmaBaseline:
    value: float = 0.0
    decay: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("baseline decay must lie in [0, 1)")


def baseline_update(baseline: EmaBaseline, mean_reward: float) -> EmaBaseline:
    if not np.isfinite(mean_reward):
        raise ValueError("mean reward must be finite")
    baseline.value = baseline.decay * baseline.value + (1 - baseline.decay) * float(mean_reward)
    return baseline


@dataclass
class Episode:
    inputs: np.ndarray
    bins: np.ndarray
    log_prob: float
    reward: float


def reinforce_gradient(policy: MlpPolicy, episodes: Sequence[Episode], baseline: float) -> list[np.ndarray]:
    """Mean of grad log pi * (reward - baseline) over the episodes."""
    total = [np.zeros_like(p) for p in policy.params]
    for ep in episodes:
        adv = ep.reward - baseline
        if adv == 0.0:
            continue
        for t, g in zip(total, policy.grad_log_prob(ep.inputs, ep.bins)):
            t += adv * g
    n = len(episodes)
    return [t / n for t in total]


def reinforce_update(policy: MlpPolicy, adam: AdamState, episodes: Sequence[Episode],
                     baseline: EmaBaseline) -> tuple[MlpPolicy, AdamState]:
    """Adam ascent step on the REINFORCE estimate. The baseline is read, not updated.

    When every advantage is exactly zero the call is a no-op: neither the
    parameters nor the optimizer moments change.
    """
    if not episodes:
        raise ValueError("reinforce_update needs at least one episode")
    if all(ep.reward - baseline.value == 0.0 for ep in episodes):
        return policy, adam
    adam.ascend(policy.params, reinforce_gradient(policy, episodes, baseline.value))
    return policy, adam
