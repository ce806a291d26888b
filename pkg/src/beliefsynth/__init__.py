"""Reach-avoid controller synthesis for linear Gaussian systems through
interval-MDP abstraction of the Kalman-filtered belief dynamics."""

from .models import (Box, GaussianDist, LtiSystem, MultirateSystem, BenchmarkSpec,
                     step_dynamics, measure, rediscretize)
from .kalman import KalmanStep, predict, gain, correct_covariance, correct_mean, \
    covariance_schedule
from .geometry import (ABSORBING, Partition, Region, BackwardSet, AugmentedSpec,
                       build_partition, region_of, backward_reachable_contains,
                       region_contained_in_backward_set, augment_regions)
from .probability import (ProbConfig, ProbInterval, mvn_box_prob, to_interval,
                          error_bound, successor_intervals)
from .abstraction import (ActionId, StateId, StateKind, HorizonSpec, Imdp,
                          CovariancePair, covariance_pair, build_base,
                          build_two_phase, build_adaptive, structural_report)
from .solver import (ValueTable, worst_case_expectation, robust_value_iteration,
                     reachability_from)
from .runtime import Controller, SimReport, control_input, simulate, emit_heatmap
from .benchmarks import BENCHMARKS, get_benchmark, default_partition

__version__ = "0.1.0"
