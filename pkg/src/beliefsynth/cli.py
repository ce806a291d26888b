"""Command-line pipeline: build -> solve -> simulate -> emit artifacts.

Verbs:
  run           full pipeline, writes the artifact bundle
  verify        built-in invariant suites (exit 3 on failure)
  export-prism  build only, write the explicit model pair
  simulate      build + solve + Monte Carlo, write simulation outputs

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 invariant
failure. Artifacts are deterministic for a fixed (config, seed) apart from
the timing section of the manifest. The default output directory can be set
via the BELIEFSYNTH_OUTDIR environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .abstraction import (HorizonSpec, build_adaptive, build_base, build_two_phase,
                          structural_report)
from .benchmarks import BENCHMARKS, DEFAULT_COUNTS, get_benchmark
from .errors import (AbstractionIntegrityError, ConfigurationError,
                     ControllerIntegrityError, RejectedInputError)
from .geometry import build_partition
from .models import BenchmarkSpec, Box, GaussianDist, LtiSystem, rediscretize
from .probability import ProbConfig
from .prism import export_explicit
from .runtime import Controller, emit_heatmap, emit_regions, emit_trajectories, simulate
from .solver import export_values_csv, reachability_from, robust_value_iteration
from . import selfcheck

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Validated pipeline configuration (flags and config file merged)."""

    benchmark: str = "double-integrator"
    inline_benchmark: dict | None = None
    grid: tuple | None = None
    horizon: int | None = None
    nbar: int | None = None
    rates: tuple = ()
    gamma_max: int = 4
    beta: float = 0.01
    theta: float = 0.01
    qmc_samples: int = 2048
    seed: int = 2023
    noise_scale: float | None = None
    trials: int = 0
    initial_region: int | None = None
    record_trajectories: int = 10
    out: str = "out"

    def validate(self) -> list[str]:
        errors = []
        if self.inline_benchmark is None and self.benchmark not in BENCHMARKS:
            errors.append(f"unknown benchmark {self.benchmark!r}")
        if not (0 < self.beta < 1):
            errors.append("beta must lie in (0, 1)")
        if not (0 < self.theta < 1):
            errors.append("theta must lie in (0, 1)")
        if self.qmc_samples < 16:
            errors.append("qmc-samples must be >= 16")
        if self.horizon is not None and self.horizon < 1:
            errors.append("horizon must be positive")
        if self.nbar is not None:
            n = self.horizon if self.horizon is not None else _default_horizon(self)
            if not (1 <= self.nbar <= n):
                errors.append("nbar must satisfy 1 <= nbar <= horizon")
        if any(r < 2 for r in self.rates):
            errors.append("adaptive rates must be >= 2")
        if self.gamma_max < 1:
            errors.append("gamma-max must be >= 1")
        if self.trials < 0:
            errors.append("trials must be >= 0")
        if self.grid is not None and any(c < 1 for c in self.grid):
            errors.append("grid counts must be >= 1")
        return errors


def _default_horizon(cfg: RunConfig) -> int:
    if cfg.inline_benchmark is not None:
        return int(cfg.inline_benchmark.get("horizon", 1))
    return {"double-integrator": 16, "motion-2d": 12, "motion-3d": 12}[cfg.benchmark]


def _spec_from_inline(data: dict) -> BenchmarkSpec:
    def boxes(key):
        return tuple(Box(np.array(b["lo"], float), np.array(b["hi"], float))
                     for b in data.get(key, []))

    raw = LtiSystem(
        A=np.array(data["A"], float), B=np.array(data["B"], float),
        C=np.array(data["C"], float),
        process_noise=GaussianDist(np.array(data.get("w_mean",
                                                     [0.0] * len(data["A"])), float),
                                   np.array(data["w_cov"], float)),
        meas_noise_cov=np.array(data["v_cov"], float),
        control_box=Box(np.array(data["control_lo"], float),
                        np.array(data["control_hi"], float)),
        state_domain=Box(np.array(data["domain_lo"], float),
                         np.array(data["domain_hi"], float)),
    )
    merge = int(data.get("merge", 1))
    sys = rediscretize(raw, merge).as_system() if merge > 1 else raw
    return BenchmarkSpec(
        name=data.get("name", "inline"), system=sys,
        initial_belief=GaussianDist(np.zeros(sys.n), np.array(data["sigma0"], float)),
        horizon=int(data["horizon"]),
        goal_regions=boxes("goal"), critical_regions=boxes("critical"),
        noise_scale=float(data.get("noise_scale", 1.0)),
    )


def _resolve(cfg: RunConfig):
    if cfg.inline_benchmark is not None:
        spec = _spec_from_inline(cfg.inline_benchmark)
    else:
        spec = get_benchmark(cfg.benchmark, noise_scale=cfg.noise_scale,
                             horizon=cfg.horizon)
    counts = cfg.grid if cfg.grid is not None else DEFAULT_COUNTS.get(spec.name)
    if counts is None:
        raise ConfigurationError("no grid counts given and no default available")
    if len(counts) == 1 and spec.system.n > 1:
        counts = tuple(counts) * spec.system.n
    partition = build_partition(spec.system.state_domain, counts)
    prob_cfg = ProbConfig(theta=cfg.theta, qmc_samples=cfg.qmc_samples, seed=cfg.seed)
    return spec, partition, prob_cfg


def _build(cfg: RunConfig, spec, partition, prob_cfg):
    n = spec.horizon
    if cfg.rates:
        horizon = HorizonSpec(N=n, Nbar=cfg.nbar if cfg.nbar else max(1, n // 4),
                              adaptive_rates=tuple(cfg.rates), gamma_max=cfg.gamma_max)
        return build_adaptive(spec, partition, horizon, prob_cfg, cfg.beta)
    if cfg.nbar is not None:
        return build_two_phase(spec, partition, HorizonSpec(N=n, Nbar=cfg.nbar),
                               prob_cfg, cfg.beta)
    return build_base(spec, partition, prob_cfg, cfg.beta)


class _ArtifactSink:
    """Tracks written artifacts so a failed run leaves nothing behind."""

    def __init__(self, outdir: str):
        self.outdir = outdir
        self.paths: list[str] = []

    def path(self, name: str) -> str:
        os.makedirs(self.outdir, exist_ok=True)
        p = os.path.join(self.outdir, name)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _pipeline(cfg: RunConfig, do_export=True, do_sim=None) -> dict:
    sink = _ArtifactSink(cfg.out)
    timings = {}
    try:
        spec, partition, prob_cfg = _resolve(cfg)
        t0 = time.perf_counter()
        imdp = _build(cfg, spec, partition, prob_cfg)
        timings["build_s"] = time.perf_counter() - t0
        report = structural_report(imdp)
        t0 = time.perf_counter()
        table = robust_value_iteration(imdp)
        timings["solve_s"] = time.perf_counter() - t0

        values0 = np.array([table.value[s] for s in imdp.states
                            if s.phase == ("transient", 0)])
        summary = {
            "benchmark": spec.name,
            "partition": list(partition.counts),
            "states": report.states,
            "choices": report.choices,
            "transitions": report.transitions,
            "solver_converged": table.converged,
            "solver_sweeps": table.sweeps,
            "correctness_flag": imdp.correctness_flag,
            "max_initial_value": float(values0.max()),
            "positive_initial_regions": int((values0 > 0).sum()),
        }
        with open(sink.path("report.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")

        export_values_csv(imdp, table, sink.path("values.csv"))
        emit_heatmap(imdp, table, sink.path("heatmap.csv"))
        emit_regions(spec, imdp, sink.path("regions.csv"))
        if do_export:
            export_explicit(imdp, sink.path("model.sta"), sink.path("model.tra"))

        sim_summary = None
        trials = cfg.trials if do_sim is None else do_sim
        if trials:
            region = cfg.initial_region
            if region is None:
                region = int(values0.argmax())
            t0 = time.perf_counter()
            rep = simulate(spec, Controller(spec, imdp, table), trials=trials,
                           seed=cfg.seed, initial_region=region,
                           record_trajectories=cfg.record_trajectories)
            timings["simulate_s"] = time.perf_counter() - t0
            sim_summary = {
                "initial_region": rep.initial_region,
                "trials": rep.trials,
                "successes": rep.successes,
                "empirical_rate": rep.empirical_rate,
                "guaranteed_lower_bound": rep.guaranteed_lower_bound,
                "confidence": rep.confidence,
            }
            with open(sink.path("simulation.json"), "w") as fh:
                json.dump(sim_summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
            if rep.trajectories:
                emit_trajectories(rep, sink.path("trajectories.csv"))

        manifest = {
            "config": asdict(cfg),
            "versions": {
                "beliefsynth": __version__,
                "python": sys.version.split()[0],
                "numpy": np.__version__,
            },
            "timings": timings,
        }
        with open(sink.path("manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return {"report": summary, "simulation": sim_summary}
    except Exception:
        sink.cleanup()
        raise


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--benchmark", default="double-integrator",
                   help="built-in benchmark name")
    p.add_argument("--config", help="JSON config file (inline benchmark allowed)")
    p.add_argument("--grid", type=int, nargs="+", help="partition counts per axis")
    p.add_argument("--horizon", type=int)
    p.add_argument("--nbar", type=int, help="transient phase length (enables 2-phase)")
    p.add_argument("--rates", type=int, nargs="*", default=[],
                   help="adaptive measurement rates (enables adaptive scheme)")
    p.add_argument("--gamma-max", type=int, default=4)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--theta", type=float, default=0.01)
    p.add_argument("--qmc-samples", type=int, default=2048)
    p.add_argument("--seed", type=int, default=2023)
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--initial-region", type=int)
    p.add_argument("--out", default=None)


def _config_from_args(args) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    cfg = RunConfig(
        benchmark=data.get("benchmark_name", args.benchmark),
        inline_benchmark=data.get("benchmark") if isinstance(data.get("benchmark"), dict)
        else None,
        grid=tuple(args.grid) if args.grid else
        (tuple(data["grid"]) if "grid" in data else None),
        horizon=args.horizon if args.horizon is not None else data.get("horizon_steps"),
        nbar=args.nbar if args.nbar is not None else data.get("nbar"),
        rates=tuple(args.rates) if args.rates else tuple(data.get("rates", ())),
        gamma_max=args.gamma_max,
        beta=args.beta if args.beta != 0.01 else data.get("beta", 0.01),
        theta=args.theta if args.theta != 0.01 else data.get("theta", 0.01),
        qmc_samples=args.qmc_samples,
        seed=args.seed if args.seed != 2023 else data.get("seed", 2023),
        noise_scale=args.noise_scale,
        trials=args.trials if args.trials else data.get("trials", 0),
        initial_region=args.initial_region if args.initial_region is not None
        else data.get("initial_region"),
        out=args.out or data.get("out") or os.environ.get("BELIEFSYNTH_OUTDIR", "out"),
    )
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="beliefsynth", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run", "export-prism", "simulate"):
        _add_common(sub.add_parser(verb))
    sub.add_parser("verify").add_argument("--json", action="store_true",
                                          help="machine-readable summary on stdout")
    args = parser.parse_args(argv)

    if args.verb == "verify":
        results = selfcheck.run_all(verbose=not args.json)
        if args.json:
            print(json.dumps([{"suite": n, "passed": ok, "detail": d}
                              for n, ok, d in results]))
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INVARIANT

    try:
        cfg = _config_from_args(args)
        errors = cfg.validate()
        if errors:
            for e in errors:
                print(f"config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        if args.verb == "run":
            if cfg.trials == 0:
                cfg.trials = 100  # run always emits a simulation report
            out = _pipeline(cfg)
        elif args.verb == "export-prism":
            out = _pipeline(cfg, do_export=True, do_sim=0)
        else:  # simulate
            if cfg.trials <= 0:
                print("config error: simulate needs --trials >= 1", file=sys.stderr)
                return EXIT_CONFIG
            out = _pipeline(cfg, do_export=False)
        print(json.dumps(out["report"], indent=2, sort_keys=True))
        if out.get("simulation"):
            print(json.dumps(out["simulation"], indent=2, sort_keys=True))
        return EXIT_OK
    except (ConfigurationError, RejectedInputError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AbstractionIntegrityError, ControllerIntegrityError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
