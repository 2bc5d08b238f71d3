"""Config-driven experiment runner.

Subcommands:

* ``run <config.json>``: learn a gain from each configured initial policy,
  writing per-run CSV traces and a summary with the oracle comparison.
* ``oracle <config.json>``: model-based route only (Riccati gain, value
  matrix, exact policy-iteration traces).
* ``plots <artifact-dir>``: emit per-figure CSV data and render figures.

Exit codes: 0 success, 1 configuration/validation error, 2 runtime failure.
"""

import argparse
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import oracle, report
from .config import ExperimentConfig, load_config
from .errors import ConfigError, QlqrError
from .lti import LinearPolicy, derive_seed, is_stabilizing, rollout
from .qlearn import PiReference, PiTrace, run_policy_iteration
from .qnn import SdpQuadraticTrainer

# stream tags for per-run seed derivation
_PROBE_TAG, _X0_TAG, _H0_TAG = 1, 2, 3


@dataclass
class RunResult:
    index: int
    run_dir: str
    trace: PiTrace | None
    error: str | None
    summary: dict


@dataclass
class ExperimentResult:
    output_dir: str
    runs: list[RunResult]
    oracle_gain: np.ndarray
    all_converged: bool


def _run_reference(cfg: ExperimentConfig) -> tuple[PiReference, np.ndarray, np.ndarray]:
    opt_pol, P = oracle.riccati_lqr(cfg.ss, cfg.cost)
    ref = PiReference(
        gain=opt_pol.K,
        stabilizing_check=lambda pol: is_stabilizing(cfg.ss, pol),
    )
    return ref, opt_pol.K, P


def _write_run_artifacts(
    cfg: ExperimentConfig, run_dir: str, trace: PiTrace, payload: dict
) -> None:
    os.makedirs(run_dir, exist_ok=True)
    report.write_trace_csv(trace, os.path.join(run_dir, "trace.csv"))
    report.write_inner_csv(trace, os.path.join(run_dir, "eval_inner.csv"))
    final = LinearPolicy(trace.final_gain)
    closed = rollout(cfg.ss, final, cfg.x0, cfg.rollout_steps, probe=None)
    report.write_rollout_csv(
        closed, cfg.sample_time, os.path.join(run_dir, "rollout.csv")
    )
    report.write_json(os.path.join(run_dir, "summary.json"), payload)


def run_experiment(cfg: ExperimentConfig, log=print) -> ExperimentResult:
    """Execute every configured initial policy; artifacts under output_dir."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    ref, K_star, _ = _run_reference(cfg)
    results: list[RunResult] = []
    for i, pol0 in enumerate(cfg.initial_policies):
        run_dir = os.path.join(cfg.output_dir, f"run_{i:02d}")
        started = time.perf_counter()
        trainer = SdpQuadraticTrainer(beta=cfg.qnn_beta, solver=cfg.solver)
        pi_cfg = cfg.pi_config(
            probing_seed=derive_seed(cfg.seed, i, _PROBE_TAG),
            x0_seed=derive_seed(cfg.seed, i, _X0_TAG),
        )
        eval_cfg = cfg.eval_cfg
        if eval_cfg.h0_init == "random_psd":
            from dataclasses import replace

            eval_cfg = replace(eval_cfg, h0_seed=derive_seed(cfg.seed, i, _H0_TAG))
        rollout_fn = lambda pol, x0, steps, probe: rollout(  # noqa: E731
            cfg.ss, pol, x0, steps, probe
        )
        error = None
        try:
            trace = run_policy_iteration(
                rollout_fn, pol0, cfg.cost, eval_cfg, pi_cfg,
                trainer=trainer, reference=ref,
            )
        except QlqrError as exc:
            error = f"{type(exc).__name__}: {exc}"
            trace = getattr(exc, "trace", None) or PiTrace()
        wall = time.perf_counter() - started
        evaluated = trace.evaluated_records
        payload = {
            "run_index": i,
            "initial_gain": pol0.K.tolist(),
            "final_gain": trace.final_gain.tolist() if trace.records else None,
            "oracle_gain": K_star.tolist(),
            "gain_error_per_entry": (
                np.abs(trace.final_gain - K_star).tolist() if trace.records else None
            ),
            "converged": trace.converged,
            "outer_iterations": max(trace.outer_iterations, 0),
            "inner_iterations_total": int(
                sum(r.inner_iterations or 0 for r in evaluated)
            ),
            "all_intermediate_stabilizing": all(
                r.stabilizing for r in trace.records if r.stabilizing is not None
            ),
            "error": error,
            "wall_time_s": wall,
            "sample_time": cfg.sample_time,
            "seed": cfg.seed,
            "config": cfg.raw,
        }
        if trace.records:
            _write_run_artifacts(cfg, run_dir, trace, payload)
        else:
            os.makedirs(run_dir, exist_ok=True)
            report.write_json(os.path.join(run_dir, "summary.json"), payload)
        status = "converged" if trace.converged else (error or "not converged")
        log(
            f"run {i}: {status}; sweeps={payload['outer_iterations']} "
            f"wall={wall:.1f}s"
        )
        results.append(RunResult(i, run_dir, trace, error, payload))

    all_converged = all(r.trace is not None and r.trace.converged for r in results)
    top = {
        "config": cfg.raw,
        "seed": cfg.seed,
        "oracle": {"gain": K_star.tolist()},
        "all_converged": all_converged,
        "runs": [r.summary for r in results],
    }
    report.write_json(os.path.join(cfg.output_dir, "summary.json"), top)
    return ExperimentResult(cfg.output_dir, results, K_star, all_converged)


def run_oracle(cfg: ExperimentConfig, log=print) -> dict:
    """Model-based route: optimal gain, value matrix, exact PI traces."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    opt_pol, P = oracle.riccati_lqr(cfg.ss, cfg.cost)
    payload = {
        "optimal_gain": opt_pol.K.tolist(),
        "value_matrix": P.tolist(),
        "gamma": cfg.cost.gamma,
        "config": cfg.raw,
        "policy_iteration": [],
    }
    for i, pol0 in enumerate(cfg.initial_policies):
        gains = oracle.policy_iteration_exact(cfg.ss, cfg.cost, pol0)
        payload["policy_iteration"].append(
            {
                "run_index": i,
                "iterations": len(gains) - 1,
                "gains": [g.K.tolist() for g in gains],
            }
        )
        header = ["iteration"] + report.gain_headers(pol0.K.size)
        rows = [[j] + list(g.K.ravel()) for j, g in enumerate(gains)]
        report.write_csv(
            os.path.join(cfg.output_dir, f"oracle_trace_{i:02d}.csv"), header, rows
        )
    report.write_json(os.path.join(cfg.output_dir, "oracle_summary.json"), payload)
    k_fmt = np.array2string(opt_pol.K.ravel(), precision=3, suppress_small=True)
    log(f"optimal gain: {k_fmt}")
    return payload


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qlqr",
        description="Model-free LQR synthesis via Q-learning with a "
        "convex-trained quadratic network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the learning experiment")
    p_run.add_argument("config", help="path to the JSON experiment file")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--out", default=None, help="override the output directory")

    p_orc = sub.add_parser("oracle", help="model-based route only")
    p_orc.add_argument("config", help="path to the JSON experiment file")
    p_orc.add_argument("--seed", type=int, default=None, help="override the seed")
    p_orc.add_argument("--out", default=None, help="override the output directory")

    p_plt = sub.add_parser("plots", help="emit figure data and render figures")
    p_plt.add_argument("artifacts", help="experiment output directory")
    p_plt.add_argument("--out", default=None, help="directory for figure files")

    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "oracle"):
            cfg = load_config(args.config, args.seed, args.out)
            if args.command == "run":
                result = run_experiment(cfg)
                return 0 if result.all_converged else 2
            run_oracle(cfg)
            return 0
        data = report.emit_plot_data(args.artifacts, args.out)
        figures = report.render_figures(args.artifacts, args.out)
        print(
            f"wrote {len(data['convergence']) + len(data['trajectory'])} data "
            f"files and {len(figures)} figures"
        )
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (QlqrError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
