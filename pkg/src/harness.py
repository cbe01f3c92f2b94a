"""
Episode orchestration, seed sweeps with tail-median aggregation and the
steps-per-second benchmark.
"""
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, IO, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.agents import Policy, make_policy
from src.embeddings import LogEncoder
from src.exceptions import HarnessError, NetForgeException
from src.logger import setup_logger
from src.scenarios import load_scenario
from src.schemas import CellFailure, EpisodeMetrics, HypervisorMode, RunSummary, ScenarioConfig
from src.simulator import Simulator
import config

logger = setup_logger(__name__)

# Encoders already loaded in this process, keyed by path
_ENCODERS: Dict[str, LogEncoder] = {}

# Metric columns aggregated by the tail median
AGGREGATE_FIELDS = [
    "blue_reward", "red_reward", "services_restored", "successful_exploits",
    "steps", "steps_per_second", "dropped_blue_actions", "nullified_events",
    "aborted_events", "clipped_dt_fraction", "honeytoken_trips", "vault_compromised",
]


class RunConfig(BaseModel):
    """One column of the experiment matrix"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    scenario: Union[str, ScenarioConfig] = "benchmark"
    blue_policy: str = "passive"
    red_policy: str = "random"
    preset: Optional[str] = Field(None, description="Forward-cell preset for ctgmarl-forward")
    weights: Optional[str] = None
    episodes: int = Field(config.EPISODES_PER_SEED, ge=1)

    def resolve_scenario(self) -> ScenarioConfig:
        if isinstance(self.scenario, ScenarioConfig):
            return self.scenario
        return load_scenario(self.scenario)


def _policy(spec: Union[str, Policy], preset: Optional[str], weights: Optional[str]) -> Policy:
    if isinstance(spec, str):
        return make_policy(spec, weights=weights, preset=preset)
    return spec


def _encoder_key(scenario: ScenarioConfig) -> str:
    return scenario.encoder_path or config.ENCODER_MODEL_PATH


def episode_seed(seed: int, episode: int) -> int:
    """Episode 0 runs on the seed itself; later episodes on derived seeds"""
    if episode == 0:
        return seed
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


def run_episode(scenario: ScenarioConfig, blue_policy: Union[str, Policy],
                red_policy: Union[str, Policy], seed: int, *,
                episode: int = 0,
                preset: Optional[str] = None,
                weights: Optional[str] = None,
                encoder: Optional[LogEncoder] = None,
                executor=None,
                use_bridge: bool = True,
                trace_sink: Optional[IO[str]] = None,
                step_sink: Optional[IO[str]] = None) -> EpisodeMetrics:
    """Run one episode to the horizon and summarize it

    Raises:
        ScenarioError: the scenario fails validation
        PolicyError: unknown policy, or a policy failed (with step context)
    """
    blue = _policy(blue_policy, preset, weights)
    red = _policy(red_policy, preset, weights)
    key = _encoder_key(scenario)
    sim = Simulator(
        scenario, blue, red, seed=seed,
        encoder=encoder or _ENCODERS.get(key),
        executor=executor, use_bridge=use_bridge,
        trace_sink=trace_sink, step_sink=step_sink,
    )

    start = time.perf_counter()
    counters = sim.run()
    wall = time.perf_counter() - start
    if sim.encoder is not None:
        _ENCODERS.setdefault(key, sim.encoder)

    diagnostics = blue.diagnostics()
    steps = counters.steps
    metrics = EpisodeMetrics(
        scenario=scenario.name,
        seed=seed,
        episode=episode,
        blue_policy=getattr(blue, "name", str(blue_policy)),
        red_policy=getattr(red, "name", str(red_policy)),
        blue_reward=counters.blue_reward,
        red_reward=counters.red_reward,
        services_restored=counters.services_restored,
        cleanup_completions=counters.cleanup_completions,
        successful_exploits=counters.successful_exploits,
        steps=steps,
        final_tick=sim.state.clock,
        steps_per_second=steps / wall if wall > 0 and steps else 0.0,
        dropped_blue_actions=counters.dropped_blue_actions,
        rejected_actions=counters.rejected_actions,
        nullified_events=counters.nullified_events,
        aborted_events=counters.aborted_events,
        clipped_dt_fraction=counters.clipped_steps / steps if steps else 0.0,
        honeytoken_trips=counters.honeytoken_trips,
        vault_compromised=bool(sim.vault_breaches),
        green_records=counters.green_records,
        red_records=counters.red_records,
        oov_records=sim.oov_records,
        ode_nfe_per_step=diagnostics.get("ode_nfe_per_step"),
        mean_blue_advantage=diagnostics.get("mean_blue_advantage"),
        wall_seconds=wall,
    )
    logger.info(
        f"Episode {scenario.name} seed={seed} ep={episode}: steps={steps}, "
        f"blue={metrics.blue_reward:.2f}, red={metrics.red_reward:.2f}, "
        f"exploits={metrics.successful_exploits}, restored={metrics.services_restored}, "
        f"sps={metrics.steps_per_second:.0f}"
    )
    return metrics


def _run_cell(run: RunConfig, seed: int) -> Tuple[List[EpisodeMetrics], Optional[CellFailure]]:
    rows: List[EpisodeMetrics] = []
    try:
        scenario = run.resolve_scenario()
        for ep in range(run.episodes):
            row = run_episode(scenario, run.blue_policy, run.red_policy,
                              episode_seed(seed, ep), episode=ep,
                              preset=run.preset, weights=run.weights)
            row.scenario = run.name
            row.seed = seed
            rows.append(row)
    except NetForgeException as e:
        logger.error(f"Cell {run.name} seed={seed} failed: {str(e)}")
        return rows, CellFailure(config=run.name, seed=seed, error=f"{type(e).__name__}: {e}")
    except Exception as e:
        logger.exception(f"Cell {run.name} seed={seed} crashed: {str(e)}")
        return rows, CellFailure(config=run.name, seed=seed, error=f"{type(e).__name__}: {e}")
    return rows, None


def tail_median(rows: Sequence[EpisodeMetrics],
                fraction: float = config.REPORT_TAIL_FRACTION) -> Dict[str, float]:
    """Median of each metric over the last ceil(fraction x episodes) episodes of every seed"""
    if not rows:
        return {}
    frame = pd.DataFrame([r.model_dump() for r in rows])
    frame["vault_compromised"] = frame["vault_compromised"].astype(float)
    tails = []
    for _, group in frame.sort_values(["seed", "episode"]).groupby("seed", sort=True):
        keep = max(1, math.ceil(fraction * len(group)))
        tails.append(group.tail(keep))
    tail = pd.concat(tails)
    return {name: float(tail[name].median()) for name in AGGREGATE_FIELDS}


def summary_table(summary: RunSummary) -> str:
    """Plain-text aggregate table, one row per configuration"""
    if not summary.aggregate:
        return "(no completed cells)"
    frame = pd.DataFrame.from_dict(summary.aggregate, orient="index")
    frame.index.name = "config"
    return frame.to_string(float_format=lambda v: f"{v:.3f}")


def write_summary(summary: RunSummary, out_dir: Union[str, Path]) -> Path:
    """episodes.jsonl, failures.jsonl, aggregate.json and summary.txt"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "episodes.jsonl", "w", encoding="utf-8") as f:
        for row in summary.rows:
            f.write(row.model_dump_json() + "\n")
    with open(out / "failures.jsonl", "w", encoding="utf-8") as f:
        for failure in summary.failures:
            f.write(failure.model_dump_json() + "\n")
    (out / "aggregate.json").write_text(
        RunSummary(aggregate=summary.aggregate).model_dump_json(include={"aggregate"}, indent=2),
        encoding="utf-8",
    )
    (out / "summary.txt").write_text(summary_table(summary) + "\n", encoding="utf-8")
    logger.info(f"Wrote run outputs to {out}")
    return out


def run_matrix(configs: Sequence[RunConfig], seeds: Sequence[int],
               workers: int = config.DEFAULT_WORKERS,
               out_dir: Optional[Union[str, Path]] = None) -> RunSummary:
    """Run every (config, seed) cell and aggregate per config

    Rows come back in (config, seed, episode) order whatever the worker
    count. A failing cell is recorded and the sweep continues.

    Raises:
        HarnessError: no seeds or no configs
    """
    if not seeds:
        raise HarnessError("run_matrix needs at least one seed")
    if not configs:
        raise HarnessError("run_matrix needs at least one configuration")

    cells = [(run, seed) for run in configs for seed in seeds]
    logger.info(f"Running matrix: {len(configs)} configs x {len(seeds)} seeds ({workers} workers)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, *zip(*cells)))
    else:
        results = [_run_cell(run, seed) for run, seed in cells]

    summary = RunSummary()
    for rows, failure in results:
        summary.rows.extend(rows)
        if failure is not None:
            summary.failures.append(failure)
    for run in configs:
        rows = [r for r in summary.rows if r.scenario == run.name]
        if rows:
            summary.aggregate[run.name] = tail_median(rows)

    if summary.failures:
        logger.error(f"{len(summary.failures)} matrix cell(s) failed")
    if out_dir is not None:
        write_summary(summary, out_dir)
    return summary


def measure_sps(scenario: ScenarioConfig, duration: float, seed: int = 0,
                blue_policy: str = "random", red_policy: str = "random") -> float:
    """Single-threaded steps per second over `duration` wall seconds

    Raises:
        HarnessError: non-positive duration or a non-sim scenario
    """
    if duration <= 0:
        raise HarnessError(f"Benchmark duration must be positive, got {duration}")
    if scenario.mode != HypervisorMode.SIM:
        raise HarnessError("Throughput is measured in sim mode only")

    steps = 0
    episode = 0
    start = time.perf_counter()
    deadline = start + duration
    while time.perf_counter() < deadline:
        sim = Simulator(scenario, make_policy(blue_policy), make_policy(red_policy),
                        seed=episode_seed(seed, episode))
        while not sim.done and time.perf_counter() < deadline:
            if sim.step() is None:
                break
        steps += sim.counters.steps
        episode += 1
    elapsed = time.perf_counter() - start
    sps = steps / elapsed if elapsed > 0 else 0.0
    logger.info(f"Measured {sps:.0f} steps/s over {elapsed:.1f}s ({episode} episodes, {steps} steps)")
    return sps


def capture_steps(scenario: ScenarioConfig, blue_policy: Union[str, Policy],
                  red_policy: Union[str, Policy], seed: int, use_bridge: bool = True) -> str:
    """Per-step and trace JSONL of one episode as a single string"""
    steps, trace = io.StringIO(), io.StringIO()
    run_episode(scenario, blue_policy, red_policy, seed,
                use_bridge=use_bridge, trace_sink=trace, step_sink=steps)
    return trace.getvalue() + steps.getvalue()
