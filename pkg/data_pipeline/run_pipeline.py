#!/usr/bin/env python3
"""Offline encoder pipeline: Scenario -> Seed corpus -> Fit -> Freeze"""
import json
import os
import sys
from collections import Counter
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from src.embeddings import LogEncoder, fit_encoder
from src.scenarios import load_scenario
from src.telemetry import LogRecord, corpus_templates, generate_seed_corpus
import config


def save_corpus(corpus: List[LogRecord], output_path: str):
    """Save the corpus as JSONL (tick, node, zone, event_id, origin, xml)"""
    print(f"Saving corpus to {output_path}...")
    with open(output_path, 'w', encoding='utf-8') as f:
        for record in corpus:
            f.write(json.dumps({
                "tick": record.tick,
                "node": record.node,
                "zone": record.zone.value,
                "event_id": record.event_id,
                "origin": record.origin.value,
                "xml": record.xml_text,
            }) + "\n")
    print(f"Saved {len(corpus)} records")


def coverage(corpus: List[LogRecord]) -> Counter:
    """Records per event id"""
    return Counter(record.event_id for record in corpus)


def run_pipeline(scenario_ref: str = "benchmark",
                 corpus_size: int = config.SEED_CORPUS_SIZE,
                 fit_seed: int = config.ENCODER_FIT_SEED,
                 output_model: Optional[str] = None,
                 output_corpus: Optional[str] = None) -> LogEncoder:
    """Run the complete pipeline and return the frozen encoder"""
    output_model = output_model or config.ENCODER_MODEL_PATH
    print("=" * 60)
    print("Starting Encoder Pipeline")
    print("=" * 60)

    # Step 1: Scenario
    scenario = load_scenario(scenario_ref)
    print(f"Scenario: {scenario.name} ({scenario.node_count} nodes)")

    # Step 2: Seed corpus
    print("\n" + "=" * 60)
    print("Step 1: Seed Corpus")
    print("=" * 60)
    rng = np.random.default_rng(fit_seed)
    corpus = generate_seed_corpus(scenario, rng, corpus_size)
    print(f"Templates: {len(corpus_templates())}, distinct event ids: {len(coverage(corpus))}")
    if output_corpus:
        save_corpus(corpus, output_corpus)

    # Step 3: Fit
    print("\n" + "=" * 60)
    print("Step 2: TF-IDF + LSA Fit")
    print("=" * 60)
    encoder = fit_encoder(corpus, fit_seed)
    print(f"Vocabulary: {len(encoder.vocabulary)} n-grams, dimension {encoder.dimension}")

    # Step 4: Freeze
    Path(output_model).parent.mkdir(parents=True, exist_ok=True)
    encoder.save(output_model)

    print("\n" + "=" * 60)
    print("✓ Pipeline Complete!")
    print("=" * 60)
    print(f"Corpus records: {len(corpus)}")
    print(f"Model: {output_model} ({Path(output_model).stat().st_size} bytes)")
    return encoder


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Fit and freeze the log encoder")
    parser.add_argument("--scenario", default="benchmark", help="Scenario name or JSON path")
    parser.add_argument("--corpus-size", type=int, default=config.SEED_CORPUS_SIZE)
    parser.add_argument("--fit-seed", type=int, default=config.ENCODER_FIT_SEED)
    parser.add_argument("--output", default=None, help="Encoder file (default from config)")
    parser.add_argument("--corpus-out", default=None, help="Optional corpus JSONL export")

    args = parser.parse_args()

    run_pipeline(args.scenario, args.corpus_size, args.fit_seed, args.output, args.corpus_out)
