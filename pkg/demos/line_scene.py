"""A tour of the line-scene simulator and its reward.

Renders a target scene as text, then shows how the majority-map reward
ranks the hidden attributes, random ones, and what a short SDR run finds.

    python demos/line_scene.py
"""
import numpy as np

from scenesdr.benchmarks import line_scene_11
from scenesdr.optim import SdrConfig, run_sdr

GLYPHS = " ~=#-T|bpC"  # void sky road building fence tree pole bicycle person car

problem = line_scene_11(m_train=60, m_val=60, m_test=60)
setup = problem.info["setup"]
print("one validation image (rows subsampled):")
for row in setup.validation[0][::3, ::2]:
    print("  " + "".join(GLYPHS[v] for v in row))

hidden = problem.info["hidden_values"]
rng = np.random.default_rng(0)
rand = [problem.space.sample(rng) for _ in range(5)]
print(f"\nvalidation mIoU, hidden attributes: {problem.evaluator.evaluate(hidden, 0):.4f}")
print(f"validation mIoU, random attributes: {np.round([problem.evaluator.evaluate(v, 0) for v in rand], 4).tolist()}")

cfg = SdrConfig(updates_per_group=15)
rec = run_sdr(problem.space, problem.plan, problem.evaluator, cfg, rng=1)
print(f"\nSDR with {rec.evaluations} evaluations: test mIoU {problem.score(rec.final_values):.4f}")
for name, v, h in zip(problem.space.names, rec.final_values, hidden):
    print(f"  {name:<20} found {v:7.2f}   hidden {h:7.2f}")
