import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from streamsst import Decoder, DecoderConfig, EncoderConfig, StreamEncoder

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_encoder():
    cfg = EncoderConfig(layers=2, heads=2, model_dim=32, feature_dim=16, window=4, decoder_dim=32)
    return StreamEncoder(cfg, seed=3)


@pytest.fixture
def small_decoder():
    return Decoder(DecoderConfig(layers=2, heads=2, model_dim=32, vocab=64, window=40), seed=4)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}  {title}  {detail}")
