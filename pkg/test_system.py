#!/usr/bin/env python3
"""System check for the NetForge simulator"""

import io
import os
import sys
import time
from datetime import datetime

print("=" * 60)
print("NetForge Simulator - System Test")
print("=" * 60)
print()

# Test imports
print("[1/6] Checking imports...")
try:
    import numpy as np
    from src.actions import default_registry
    from src.embeddings import load_or_fit_encoder
    from src.harness import measure_sps, run_episode
    from src.hypervisor import TranscriptRecorder
    from src.scenarios import benchmark_scenario
    from src.schemas import HypervisorMode
    import config
    print("[PASS] All imports successful\n")
except Exception as e:
    print(f"[FAIL] Import error: {e}")
    print("\nFix: Run 'pip install -r requirements.txt'\n")
    sys.exit(1)

# Test scenario + registry
print("[2/6] Building benchmark scenario...")
try:
    scenario = benchmark_scenario()
    registry = default_registry()
    assert len(registry) == config.NUM_ACTION_TYPES
    print(f"[PASS] {scenario.node_count} nodes, {len(registry)} action types\n")
except Exception as e:
    print(f"[FAIL] Scenario error: {e}")
    print("\nFix: Check data/action_registry.json\n")
    sys.exit(1)

# Test encoder
print("[3/6] Loading log encoder...")
try:
    start = time.time()
    encoder = load_or_fit_encoder(config.ENCODER_MODEL_PATH, scenario)
    vec = encoder.encode("<Event><System><EventID>4624</EventID></System></Event>")
    print(f"[PASS] dim={encoder.dimension}, vocab={len(encoder.vocabulary)}, "
          f"norm={np.linalg.norm(vec):.6f} ({time.time() - start:.1f}s)\n")
except Exception as e:
    print(f"[FAIL] Encoder error: {e}")
    print("\nFix: Run 'scripts/netforge.sh fit-encoder'\n")
    sys.exit(1)

# Test episode
print("[4/6] Running scripted episode (red-chain vs passive)...")
try:
    short = scenario.model_copy(update={"horizon": 200.0})
    metrics = run_episode(short, "passive", "red-chain", seed=0, encoder=encoder)
    print(f"[PASS] steps={metrics.steps}, exploits={metrics.successful_exploits}, "
          f"vault_compromised={metrics.vault_compromised}\n")
except Exception as e:
    print(f"[FAIL] Episode error: {e}")
    print("\nCheck logs/netforge.log for details\n")
    sys.exit(1)

# Test bridge
print("[5/6] Recording and replaying a transcript...")
try:
    sink = io.StringIO()
    recorder = TranscriptRecorder(sink, oov_rate=0.2, seed=0)
    recorded = run_episode(short, "passive", "red-chain", seed=0, executor=recorder)
    os.makedirs(config.LOG_DIR, exist_ok=True)
    path = f"{config.LOG_DIR}/system_test_transcript.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        f.write(sink.getvalue())
    replay = short.model_copy(update={"mode": HypervisorMode.REPLAY, "transcript_path": path})
    replayed = run_episode(replay, "passive", "red-chain", seed=0)
    for field in ("steps", "blue_reward", "red_reward", "successful_exploits"):
        assert getattr(recorded, field) == getattr(replayed, field), field
    print(f"[PASS] {recorder.count} transitions replayed identically\n")
except Exception as e:
    print(f"[FAIL] Bridge error: {e}")
    sys.exit(1)

# Test throughput
print("[6/6] Measuring throughput (10s)...")
try:
    sps = measure_sps(scenario, 10.0)
    verdict = "PASS" if sps >= config.SPS_FLOOR else "WARN"
    print(f"[{verdict}] {sps:.0f} steps/s (floor {config.SPS_FLOOR:.0f})\n")
except Exception as e:
    print(f"[FAIL] Benchmark error: {e}")
    sys.exit(1)

print("=" * 60)
print("All tests passed successfully")
print("=" * 60)
print()
print("Next steps:")
print("  1. Run an episode: scripts/netforge.sh run --blue blue-threshold-isolate")
print("  2. Start API: uvicorn api.app:app --reload")
print("  3. Run the suite: pytest tests/ -m 'not slow'\n")
print(f"Completed at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
print()
