"""Discretized, grouped policy-gradient search over simulator attributes."""
from .benchmarks import BENCHMARKS, line_scene_11, line_scene_23, line_scene_coupled, toy_correlated, toy_separable
from .harness import ComparisonReport, ExperimentConfig, ablate, compare, load_config, resume, run_experiment
from .optim import (AttributeDescentRun, BudgetReport, CountingEvaluator, EvaluationError, RandomAttributesRun,
                    RandomSearchRun, RunRecord, SdrConfig, SdrRun, TableReward, attribute_descent, budget_report,
                    exhaustive_search, optimize_group, random_attributes, random_search, run_sdr)
from .policy import (AdamState, EmaBaseline, Episode, MlpPolicy, baseline_update, forward, grad_log_prob,
                     greedy_bins, reinforce_update, sample_bins)
from .scene import Dataset, SceneAttributes, SceneConfig, make_target, render_dataset, render_scene
from .space import (AttributeSpace, AttributeSpec, GroupPlan, bin_center, relax, sample_uniform,
                    validate_group_plan, value_to_bin)
from .task import ConfusionAccumulator, SceneReward, make_reward, miou, train_majority_map

__version__ = "0.1.0"
