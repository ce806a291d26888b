"""Build and solve the three abstraction variants on the double integrator.

Shows the size/quality trade-off: the 2-phase horizon shrinks the model at a
tiny cost in the computed lower bounds, and adaptive measurement rates enable
actions in remote regions where the one-step backward reachable set is too
small to certify anything.
"""

import time

import numpy as np

from beliefsynth import (HorizonSpec, build_adaptive, build_base, build_two_phase,
                         default_partition, get_benchmark, reachability_from,
                         robust_value_iteration, structural_report)

spec = get_benchmark("double-integrator")
part = default_partition(spec)   # the 21x21 grid
print(f"{spec.name}: {part.size} regions, horizon {spec.horizon}\n")

variants = {
    "base": lambda: build_base(spec, part),
    "2-phase (Nbar=3)": lambda: build_two_phase(spec, part, HorizonSpec(N=16, Nbar=3)),
    "adaptive (rates {2})": lambda: build_adaptive(
        spec, part, HorizonSpec(N=16, Nbar=3, adaptive_rates=(2,), gamma_max=4)),
}

print(f"{'variant':22} | {'states':>7} | {'choices':>8} | {'build s':>7} "
      f"| {'solve s':>7} | {'max v0':>6} | {'v0>0':>5}")
for name, make in variants.items():
    t0 = time.perf_counter()
    imdp = make()
    t_build = time.perf_counter() - t0
    rep = structural_report(imdp)
    t0 = time.perf_counter()
    table = robust_value_iteration(imdp)
    t_solve = time.perf_counter() - t0
    v0 = np.array([reachability_from(imdp, table, r) for r in range(part.size)])
    print(f"{name:22} | {rep.states:7d} | {rep.choices:8d} | {t_build:7.1f} "
          f"| {t_solve:7.2f} | {v0.max():6.3f} | {(v0 > 0).sum():5d}")

print("\nthe adaptive scheme certifies strictly more initial regions: holding a")
print("control for two merged steps enlarges the backward reachable sets, at")
print("the price of propagating a covariance *set* through the recovery branch.")
