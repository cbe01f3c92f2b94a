"""Log synthesis, Green noise, seed corpus, encoder and observation windows"""
import numpy as np
import pytest

from src.embeddings import LogEncoder, encode_log, fit_encoder
from src.exceptions import EncoderError
from src.schemas import EffectKind, Team, ZoneName
from src.telemetry import (
    EVENT_IDS, GREEN_TEMPLATES, OUTCOME_FAILURE, OUTCOME_SUCCESS, GreenProfile, Host,
    ObservationWindow, build_observation, corpus_templates, generate_seed_corpus, green_noise,
    outcome_draft, parse_event_id, synthesize_log,
)
import config

HOSTS = [Host(node=i, name=f"WS-{i:02d}", zone=ZoneName.CORPORATE, address=f"10.0.2.{10 + i}")
         for i in range(5)]


def lateral(outcome, tick=3.0):
    return outcome_draft(EffectKind.LATERAL_MOVE, outcome, tick=tick, node=4,
                         zone=ZoneName.CORPORATE, computer="CORP-WS-04", origin=Team.RED,
                         address="10.0.2.12", service="smb")


def test_synthesis_is_deterministic():
    assert synthesize_log(lateral(OUTCOME_SUCCESS)).xml_text == \
        synthesize_log(lateral(OUTCOME_SUCCESS)).xml_text


@pytest.mark.parametrize("kind,outcome,event_id", [
    (EffectKind.LATERAL_MOVE, OUTCOME_SUCCESS, 4624),
    (EffectKind.LATERAL_MOVE, OUTCOME_FAILURE, 4625),
    (EffectKind.ISOLATE, OUTCOME_SUCCESS, 4946),
    (EffectKind.EXPLOIT, "nullified", 5157),
    (EffectKind.CREDENTIAL_DUMP, "trip", 4769),
])
def test_event_ids_survive_rendering(kind, outcome, event_id):
    draft = outcome_draft(kind, outcome, tick=1.0, node=0, zone=ZoneName.DMZ,
                          computer="DMZ-WEB-00", origin=Team.RED)
    assert draft.event_id == event_id
    assert parse_event_id(synthesize_log(draft).xml_text) == event_id


def test_parse_event_id_on_garbage():
    assert parse_event_id("ContainerError: exec failed") == 0
    assert parse_event_id("<Event><System/></Event>") == 0


def test_rendering_escapes_markup():
    draft = outcome_draft(EffectKind.SCAN, OUTCOME_SUCCESS, tick=1.0, node=0, zone=ZoneName.DMZ,
                          computer="A<B&C>", origin=Team.RED)
    assert parse_event_id(synthesize_log(draft).xml_text) == draft.event_id


def test_no_green_noise_without_intensity():
    rng = np.random.default_rng(0)
    assert green_noise(0.0, 100.0, rng, GreenProfile(lam_day=0.0, lam_night=0.0), HOSTS) == []
    assert green_noise(5.0, 5.0, rng, GreenProfile(), HOSTS) == []


def test_green_noise_stays_in_interval():
    records = green_noise(10.0, 20.0, np.random.default_rng(1), GreenProfile(), HOSTS)
    assert records
    assert all(10.0 < r.tick <= 20.0 and r.origin == Team.GREEN for r in records)
    ticks = [r.tick for r in records]
    assert ticks == sorted(ticks)
    assert {r.event_id for r in records} <= {eid for eid, _ in GREEN_TEMPLATES}


def test_green_day_rate():
    profile = GreenProfile(lam_day=5.0, lam_night=0.5, day_start=0, day_end=24)
    records = green_noise(0.0, 10_000.0, np.random.default_rng(2), profile, HOSTS)
    assert 4.933 <= len(records) / 10_000 <= 5.067


def test_green_night_rate():
    profile = GreenProfile(lam_day=5.0, lam_night=0.5, day_start=0, day_end=0)
    records = green_noise(0.0, 10_000.0, np.random.default_rng(3), profile, HOSTS)
    assert 0.4788 <= len(records) / 10_000 <= 0.5212


def test_diurnal_intensity():
    profile = GreenProfile()
    assert profile.intensity(config.DAY_START_HOUR + 0.5) == config.GREEN_LAMBDA_DAY
    assert profile.intensity(config.DAY_LENGTH + config.DAY_START_HOUR) == config.GREEN_LAMBDA_DAY
    assert profile.intensity(config.DAY_END_HOUR) == config.GREEN_LAMBDA_NIGHT


def test_disabled_green_profile(small_benchmark):
    profile = GreenProfile.from_scenario(small_benchmark.model_copy(update={"green_enabled": False}))
    assert profile.peak == 0.0


# ---- seed corpus ----

def test_corpus_minimum_size(small_benchmark):
    minimum = 10 * len(corpus_templates())
    rng = np.random.default_rng(0)
    with pytest.raises(EncoderError):
        generate_seed_corpus(small_benchmark, rng, 0)
    with pytest.raises(EncoderError):
        generate_seed_corpus(small_benchmark, rng, minimum - 1)
    assert len(generate_seed_corpus(small_benchmark, rng, minimum)) == minimum


def test_corpus_is_deterministic_and_complete(small_benchmark):
    size = 10 * len(corpus_templates())
    first = generate_seed_corpus(small_benchmark, np.random.default_rng(4), size)
    second = generate_seed_corpus(small_benchmark, np.random.default_rng(4), size)
    assert [r.xml_text for r in first] == [r.xml_text for r in second]
    expected = set(EVENT_IDS.values()) | {eid for eid, _ in GREEN_TEMPLATES}
    assert {r.event_id for r in first} == expected


# ---- encoder ----

def test_embeddings_are_unit_norm(encoder, seed_corpus):
    vectors = encoder.encode_batch([r.xml_text for r in seed_corpus[:200]])
    assert vectors.shape == (200, config.EMBEDDING_DIMENSION)
    assert np.all(np.abs(np.linalg.norm(vectors, axis=1) - 1.0) < 1e-6)


def test_out_of_vocabulary_text(encoder):
    before = encoder.oov_count
    vector = encoder.encode("中文日本語")
    assert not vector.any()
    assert encoder.oov_count == before + 1


def test_success_and_failure_logons_differ(encoder):
    ok = encode_log(encoder, synthesize_log(lateral(OUTCOME_SUCCESS)))
    bad = encode_log(encoder, synthesize_log(lateral(OUTCOME_FAILURE)))
    assert float(ok @ bad) < 1.0 - 1e-3


def test_refit_is_byte_identical(encoder, seed_corpus):
    assert fit_encoder(seed_corpus, config.ENCODER_FIT_SEED).to_bytes() == encoder.to_bytes()


def test_small_corpus_is_rejected():
    docs = [f"<Event><System><EventID>{4600 + i}</EventID></System></Event>" for i in range(64)]
    with pytest.raises(EncoderError):
        LogEncoder.fit(docs)


def test_container_round_trip(encoder, tmp_path):
    path = tmp_path / "encoder.nfenc"
    encoder.save(path)
    restored = LogEncoder.load(path)
    assert restored.vocabulary == encoder.vocabulary
    assert restored.fit_seed == config.ENCODER_FIT_SEED
    text = synthesize_log(lateral(OUTCOME_SUCCESS)).xml_text
    assert np.array_equal(restored.encode(text), encoder.encode(text))


def test_container_errors(encoder, tmp_path):
    with pytest.raises(EncoderError, match="magic"):
        LogEncoder.from_bytes(b"XXXXXX" + encoder.to_bytes()[6:])
    with pytest.raises(EncoderError):
        LogEncoder.from_bytes(encoder.to_bytes()[:10])
    with pytest.raises(EncoderError):
        LogEncoder.load(tmp_path / "missing.nfenc")


# ---- observation windows ----

def test_empty_window_is_zero():
    assert not build_observation(ObservationWindow()).any()


def test_window_mean_uses_full_capacity():
    e = np.zeros(config.EMBEDDING_DIMENSION)
    e[0] = 1.0
    window = ObservationWindow()
    window.push(e)
    assert np.allclose(build_observation(window), e / 8)
    for _ in range(7):
        window.push(e)
    assert np.allclose(build_observation(window), e)


def test_window_evicts_oldest():
    window = ObservationWindow(capacity=8)
    vectors = [np.full(config.EMBEDDING_DIMENSION, float(i)) for i in range(9)]
    for v in vectors:
        window.push(v)
    assert len(window) == 8
    assert window.embeddings()[0][0] == 1.0
    assert np.allclose(build_observation(window), np.full(config.EMBEDDING_DIMENSION, 4.5))


def test_window_with_raw_records_needs_encoder():
    window = ObservationWindow()
    window.push(synthesize_log(lateral(OUTCOME_SUCCESS)))
    with pytest.raises(EncoderError):
        build_observation(window)
