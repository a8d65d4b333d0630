"""Searching small reward tables where the answer is known.

On a separable table every method that looks at one attribute at a time
finds the optimum. On the correlated table the best pair is only visible
when both attributes move together, which is where a joint policy helps.

    python demos/toy_search.py
"""
import numpy as np

from scenesdr.benchmarks import toy_correlated, toy_separable
from scenesdr.optim import SdrConfig, attribute_descent, exhaustive_search, run_sdr
from scenesdr.space import GroupPlan

sep = toy_separable()
bins, best = exhaustive_search(sep.space, sep.evaluator)
print(f"separable toy: optimum {best:.3f} at bins {bins.tolist()}")
ad = attribute_descent(sep.space, sep.evaluator, rng=0)
print(f"  attribute descent: {sep.score(ad.final_values):.3f} after {ad.evaluations} evaluations")
for lr in (1e-2, 1e-3):
    scores = [sep.score(run_sdr(sep.space, sep.plan, sep.evaluator, SdrConfig(learning_rate=lr), s).final_values)
              for s in range(5)]
    print(f"  SDR, learning rate {lr:g}: {np.round(scores, 3).tolist()}")

cor = toy_correlated()
print("\ncorrelated toy, starting every method from the middle bins")
print(np.round(cor.evaluator.table, 2))
ctx = cor.adverse_context
ad = attribute_descent(cor.space, cor.evaluator, ctx, rng=0)
print(f"  attribute descent: {cor.score(ad.final_values):.3f}")
for name, plan in (("joint group", GroupPlan.single(2)), ("one group each", GroupPlan.singletons(2))):
    scores = [cor.score(run_sdr(cor.space, plan, cor.evaluator, SdrConfig(), s, ctx).final_values) for s in range(5)]
    print(f"  SDR, {name}: median {np.median(scores):.3f}")
