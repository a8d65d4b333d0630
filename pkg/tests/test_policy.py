import itertools

import numpy as np
import pytest

from scenesdr.policy import (AdamState, EmaBaseline, Episode, MlpPolicy, baseline_update, forward, grad_log_prob,
                             greedy_bins, reinforce_gradient, reinforce_update, sample_bins)


def small(seed=0, n=2, heads=(3, 3), hidden=(5, 4)):
    return MlpPolicy(n, heads, hidden, np.random.default_rng(seed))


def test_default_shape_and_parameter_count():
    p = MlpPolicy(4, [10] * 4, rng=np.random.default_rng(0))
    assert p.dims == (4, 256, 256, 40)
    assert p.num_parameters() == 4 * 256 + 256 + 256 * 256 + 256 + 256 * 40 + 40


def test_forward_zero_weights_uniform():
    p = small().zero_()
    for row in forward(p, [0.3, 0.9]):
        assert np.allclose(row, 1 / 3)


def test_forward_rows_normalized_even_for_huge_logits():
    p = small(1)
    for w in p.params:
        w *= 1e4
    rows = forward(p, [1.0, 0.0])
    assert all(np.isfinite(r).all() and abs(r.sum() - 1) < 1e-9 for r in rows)


def test_logit_perturbation_moves_only_its_row():
    p = small(2, heads=(3, 4))
    x = [0.2, 0.7]
    before = forward(p, x)
    p.params[-1][1] += 0.5  # bias of logit 1 in the first head
    after = forward(p, x)
    assert after[0][1] > before[0][1]
    assert np.all(after[0][[0, 2]] < before[0][[0, 2]])
    assert np.allclose(after[1], before[1])


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(small(), [0.1, 0.2, 0.3])


def test_sample_bins_uniform_log_prob():
    rows = [np.full(10, 0.1)] * 3
    for seed in range(5):
        _, logp = sample_bins(rows, np.random.default_rng(seed))
        assert logp == pytest.approx(np.log(1e-3))


def test_sample_bins_degenerate_row():
    row = np.zeros(10)
    row[0] = 1.0
    for seed in range(20):
        bins, logp = sample_bins([row], np.random.default_rng(seed))
        assert bins[0] == 0 and logp == 0.0


def test_sample_bins_frequencies():
    p = np.array([0.05, 0.15, 0.5, 0.3])
    rng = np.random.default_rng(5)
    n = 100_000
    counts = np.bincount([sample_bins([p], rng)[0][0] for _ in range(n)], minlength=4)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma)


def test_greedy_bins():
    assert greedy_bins([np.array([0.1, 0.7, 0.2])]).tolist() == [1]
    assert greedy_bins([np.full(4, 0.25)]).tolist() == [0]
    assert greedy_bins([np.array([0.6, 0.4]), np.array([0.2, 0.2, 0.6])]).tolist() == [0, 2]


def _flat(grads):
    return np.concatenate([g.ravel() for g in grads])


def _logp(p, x, bins):
    return sum(lp[b] for lp, b in zip(p.log_probs(x), bins))


@pytest.mark.parametrize("seed", range(20))
def test_grad_log_prob_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(1, 4))
    heads = rng.integers(2, 5, size=n)
    p = MlpPolicy(n, heads, tuple(rng.integers(2, 7, size=2)), rng)
    x = rng.random(n)
    bins = [int(rng.integers(k)) for k in heads]
    analytic = _flat(grad_log_prob(p, x, bins))
    numeric = []
    h = 1e-5
    for w in p.params:
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = _logp(p, x, bins)
            w[idx] = old - h
            down = _logp(p, x, bins)
            w[idx] = old
            numeric.append((up - down) / (2 * h))
    numeric = np.array(numeric)
    rel = np.abs(analytic - numeric) / np.maximum(1e-3, np.abs(analytic) + np.abs(numeric))
    assert rel.max() <= 1e-4


def test_grad_zero_policy_sign_pattern():
    p = small().zero_()
    g = grad_log_prob(p, [0.4, 0.6], [2, 0])
    db = g[-1]  # gradient w.r.t. output bias = gradient w.r.t. logits
    assert db[2] > 0 and db[0] < 0 and db[1] < 0
    assert db[3] > 0 and db[4] < 0 and db[5] < 0
    assert abs(db[:3].sum()) < 1e-12 and abs(db[3:].sum()) < 1e-12


def test_grad_is_deterministic():
    p = small(4)
    a = _flat(grad_log_prob(p, [0.1, 0.5], [1, 2]))
    b = _flat(grad_log_prob(p, [0.1, 0.5], [1, 2]))
    assert np.array_equal(a, b)


def test_grad_bins_shape_checked():
    with pytest.raises(ValueError):
        grad_log_prob(small(), [0.1, 0.5], [1])


def test_baseline_update_examples():
    assert baseline_update(EmaBaseline(0.0, 0.9), 0.5).value == pytest.approx(0.05)
    assert baseline_update(EmaBaseline(0.3, 0.0), 0.8).value == 0.8
    b, prev = EmaBaseline(0.0, 0.9), 0.0
    for _ in range(200):
        baseline_update(b, 0.7)
        assert prev <= b.value <= 0.7
        prev = b.value
    assert b.value == pytest.approx(0.7, abs=1e-8)


def test_baseline_stays_in_hull():
    rng = np.random.default_rng(0)
    b, seen = EmaBaseline(), [0.0]
    for r in rng.random(50):
        seen.append(r)
        baseline_update(b, r)
        assert min(seen) <= b.value <= max(seen)
    with pytest.raises(ValueError):
        EmaBaseline(0.0, 1.0)
    with pytest.raises(ValueError):
        baseline_update(b, float("nan"))


def test_zero_advantage_is_identity():
    p = small(3)
    adam = AdamState.for_policy(p)
    before = [w.copy() for w in p.params]
    eps = [Episode(np.array([0.2, 0.3]), np.array([0, 1]), -1.0, 0.25)] * 3
    reinforce_update(p, adam, eps, EmaBaseline(0.25))
    assert all(np.array_equal(a, b) for a, b in zip(before, p.params))
    assert adam.step == 0


def test_empty_episodes_rejected():
    p = small()
    with pytest.raises(ValueError):
        reinforce_update(p, AdamState.for_policy(p), [], EmaBaseline())


def test_positive_advantage_raises_sampled_probability():
    p = small(6)
    x = np.array([0.5, 0.1])
    bins = np.array([2, 1])
    before = np.prod([r[b] for r, b in zip(forward(p, x), bins)])
    reinforce_update(p, AdamState.for_policy(p), [Episode(x, bins, np.log(before), 0.9)], EmaBaseline(0.1))
    after = np.prod([r[b] for r, b in zip(forward(p, x), bins)])
    assert after > before


def test_adam_first_step_is_lr_times_sign():
    p = small(7)
    adam = AdamState.for_policy(p, lr=1e-2)
    before = [w.copy() for w in p.params]
    grads = [np.full_like(w, 3.0) for w in p.params]
    grads[0][0, 0] = -2.0
    adam.ascend(p.params, grads)
    step = p.params[0] - before[0]
    assert step[0, 0] == pytest.approx(-1e-2, rel=1e-6)
    assert step[0, 1] == pytest.approx(1e-2, rel=1e-6)
    assert adam.step == 1


def test_score_function_mean_zero():
    p = small(8)
    x = np.array([0.3, 0.8])
    rng = np.random.default_rng(9)
    probs = forward(p, x)
    n = 20_000
    acc = np.zeros(p.num_parameters())
    sq = np.zeros_like(acc)
    for _ in range(n):
        bins, _ = sample_bins(probs, rng)
        g = _flat(grad_log_prob(p, x, bins))
        acc += g
        sq += g * g
    mean = acc / n
    se = np.sqrt(np.maximum(sq / n - mean ** 2, 1e-18) / n)
    assert np.all(np.abs(mean) <= 5 * se + 1e-12)


def exact_gradient(p, x, table):
    """d/dphi E[R] = sum_bins pi(bins) R(bins) grad log pi(bins), by enumeration."""
    probs = forward(p, x)
    total = np.zeros(p.num_parameters())
    for bins in itertools.product(*(range(k) for k in p.head_sizes)):
        pr = np.prod([r[b] for r, b in zip(probs, bins)])
        total += pr * table[bins] * _flat(grad_log_prob(p, x, bins))
    return total


def test_reinforce_gradient_matches_enumeration_small_sample():
    # with every outcome listed once, weighted by its probability, the estimator is exact
    p = small(10)
    x = np.array([0.6, 0.2])
    table = np.arange(9.0).reshape(3, 3) / 8
    probs = forward(p, x)
    outcomes = list(itertools.product(range(3), range(3)))
    eps = [Episode(x, np.array(b), 0.0, table[b]) for b in outcomes]
    weights = np.array([np.prod([probs[0][b[0]], probs[1][b[1]]]) for b in outcomes])
    est = np.zeros(p.num_parameters())
    for w, e in zip(weights, eps):
        est += w * _flat(reinforce_gradient(p, [e], 0.0))
    assert np.allclose(est, exact_gradient(p, x, table))
