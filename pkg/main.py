#!/usr/bin/env python3
"""netforge command-line interface"""
import argparse
import sys
from pathlib import Path
from typing import List

from src.ctgmarl import EXPERIMENT_PRESETS
from src.exceptions import NetForgeException
from src.harness import RunConfig, measure_sps, run_episode, run_matrix, summary_table
from src.hypervisor import TranscriptRecorder
from src.logger import setup_logger
from src.scenarios import load_scenario
from src.schemas import HypervisorMode
import config

logger = setup_logger(__name__)


def _split(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    updates = {"mode": HypervisorMode(args.mode)}
    if args.transcript:
        updates["transcript_path"] = args.transcript
    if args.horizon is not None:
        updates["horizon"] = args.horizon
    scenario = scenario.model_copy(update=updates)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "steps.jsonl", "w", encoding="utf-8") as steps, \
            open(out / "trace.jsonl", "w", encoding="utf-8") as trace:
        metrics = run_episode(scenario, args.blue, args.red, args.seed,
                              preset=args.preset, weights=args.weights,
                              trace_sink=trace if args.trace else None, step_sink=steps)
    with open(out / "episodes.jsonl", "a", encoding="utf-8") as f:
        f.write(metrics.model_dump_json() + "\n")

    print("=" * 60)
    print(f"Episode {scenario.name} seed={args.seed} ({args.blue} vs {args.red})")
    print("=" * 60)
    for key, value in metrics.model_dump().items():
        print(f"{key:>22}: {value}")
    return 0


def cmd_matrix(args) -> int:
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    if args.experiments:
        names = list(EXPERIMENT_PRESETS) if args.experiments == "all" else _split(args.experiments)
        configs = [
            RunConfig(name=name, scenario=args.scenario, blue_policy="ctgmarl-forward",
                      red_policy=args.red, preset=name, weights=args.weights,
                      episodes=args.episodes)
            for name in names
        ]
    else:
        configs = [
            RunConfig(name=f"{blue}/{red}", scenario=args.scenario, blue_policy=blue,
                      red_policy=red, episodes=args.episodes)
            for blue in _split(args.blue) for red in _split(args.red)
        ]
    summary = run_matrix(configs, seeds, workers=args.workers, out_dir=args.out)
    print(summary_table(summary))
    for failure in summary.failures:
        print(f"[FAIL] {failure.config} seed={failure.seed}: {failure.error}")
    return 1 if summary.failures and not summary.rows else 0


def cmd_bench_sps(args) -> int:
    scenario = load_scenario(args.scenario)
    sps = measure_sps(scenario, args.duration, seed=args.seed)
    status = "PASS" if sps >= config.SPS_FLOOR else "FAIL"
    print(f"[{status}] {sps:.0f} steps/s on {scenario.name} (floor {config.SPS_FLOOR:.0f})")
    return 0 if status == "PASS" or not args.strict else 1


def cmd_fit_encoder(args) -> int:
    from data_pipeline.run_pipeline import run_pipeline

    run_pipeline(args.scenario, args.corpus_size, args.fit_seed, args.out, args.corpus_out)
    return 0


def cmd_record_transcript(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.horizon is not None:
        scenario = scenario.model_copy(update={"horizon": args.horizon})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as sink:
        recorder = TranscriptRecorder(sink, oov_rate=args.oov_rate, seed=args.seed)
        metrics = run_episode(scenario, args.blue, args.red, args.seed, executor=recorder)
    print(f"Recorded {recorder.count} transitions to {out} "
          f"({metrics.steps} steps, {metrics.successful_exploits} exploits)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netforge", description="Continuous-time cyber-defense simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one episode")
    run.add_argument("--scenario", default="benchmark")
    run.add_argument("--blue", default="passive")
    run.add_argument("--red", default="red-chain")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--mode", choices=[m.value for m in HypervisorMode], default="sim")
    run.add_argument("--transcript", default=None, help="Transcript for replay mode")
    run.add_argument("--horizon", type=float, default=None)
    run.add_argument("--preset", default=None, choices=list(EXPERIMENT_PRESETS))
    run.add_argument("--weights", default=None)
    run.add_argument("--trace", action="store_true", help="Write the event trace")
    run.add_argument("--out", default=config.OUTPUT_DIR)
    run.set_defaults(func=cmd_run)

    matrix = sub.add_parser("matrix", help="Sweep configurations over seeds")
    matrix.add_argument("--scenario", default="benchmark")
    matrix.add_argument("--seeds", type=int, default=config.DEFAULT_SEEDS)
    matrix.add_argument("--seed-base", type=int, default=0)
    matrix.add_argument("--episodes", type=int, default=config.EPISODES_PER_SEED)
    matrix.add_argument("--blue", default="passive,blue-threshold-isolate")
    matrix.add_argument("--red", default="red-chain")
    matrix.add_argument("--experiments", default=None,
                        help="Comma-separated forward presets, or 'all'")
    matrix.add_argument("--weights", default=None)
    matrix.add_argument("--workers", type=int, default=config.DEFAULT_WORKERS)
    matrix.add_argument("--out", default=config.OUTPUT_DIR)
    matrix.set_defaults(func=cmd_matrix)

    bench = sub.add_parser("bench-sps", help="Measure simulator throughput")
    bench.add_argument("--scenario", default="benchmark")
    bench.add_argument("--duration", type=float, default=60.0)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--strict", action="store_true", help="Exit non-zero below the floor")
    bench.set_defaults(func=cmd_bench_sps)

    fit = sub.add_parser("fit-encoder", help="Fit and freeze the log encoder")
    fit.add_argument("--scenario", default="benchmark")
    fit.add_argument("--corpus-size", type=int, default=config.SEED_CORPUS_SIZE)
    fit.add_argument("--fit-seed", type=int, default=config.ENCODER_FIT_SEED)
    fit.add_argument("--out", default=config.ENCODER_MODEL_PATH)
    fit.add_argument("--corpus-out", default=None)
    fit.set_defaults(func=cmd_fit_encoder)

    record = sub.add_parser("record-transcript", help="Record a replayable transcript")
    record.add_argument("--scenario", default="benchmark")
    record.add_argument("--blue", default="passive")
    record.add_argument("--red", default="red-chain")
    record.add_argument("--seed", type=int, default=0)
    record.add_argument("--horizon", type=float, default=None)
    record.add_argument("--oov-rate", type=float, default=0.1,
                        help="Share of raw logs given container-error noise")
    record.add_argument("--out", default=str(Path(config.OUTPUT_DIR) / "transcript.jsonl"))
    record.set_defaults(func=cmd_record_transcript)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NetForgeException as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
