import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
sys.path.insert(0, str(Path(__file__).parent))

from kae.checkpoint import load_checkpoint  # noqa: E402
from kae.harness.presets import desk_config  # noqa: E402
from kae.harness.train import train  # noqa: E402
from kae.model import KAEModel, ModelConfig  # noqa: E402


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return DATA / "toy_corpus.csv"


@pytest.fixture(scope="session")
def heldout_path() -> Path:
    return DATA / "toy_heldout.csv"


def small_model(conditional=False, kl=False, dtype="float64", seed=0, vocab_size=9, max_len=7, **kw) -> KAEModel:
    shape = dict(embedding_size=8, heads=2, encoder_layers=1, decoder_layers=1, latent_positions=2, dropout=0.0)
    shape.update(kw)
    cfg = ModelConfig(vocab_size=vocab_size, max_len=max_len, conditional=conditional, kl_mode=kl, dtype=dtype, **shape)
    return KAEModel(cfg, seed=seed)


class DeskModels:
    """Desk-scale models trained once and cached across pytest sessions,
    keyed by the config digest, so edits to the preset retrain."""

    def __init__(self, cache_root: Path):
        self.root = cache_root
        self.seconds: dict[str, float] = {}

    def get(self, name: str, **kw):
        cfg = desk_config(data_path=str(DATA / "toy_corpus.csv"), **kw)
        out = self.root / f"{name}-{cfg.digest()}"
        done = out / "done.json"
        if not done.exists():
            cfg = cfg.with_overrides(out_dir=str(out))
            t0 = time.perf_counter()
            res = train(cfg, lock=False)
            elapsed = time.perf_counter() - t0
            done.write_text(json.dumps({"checkpoint": res.checkpoints[-1].name, "seconds": elapsed}))
        info = json.loads(done.read_text())
        self.seconds[name] = info["seconds"]
        return cfg.with_overrides(out_dir=str(out)), load_checkpoint(out / info["checkpoint"]), out


@pytest.fixture(scope="session")
def desk_models(request) -> DeskModels:
    return DeskModels(Path(request.config.cache.mkdir("kae_desk_models")))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    CRITERIA[number] = {"title": title, "passed": rep.passed, "detail": detail}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(CRITERIA):
        c = CRITERIA[number]
        status = "PASS" if c["passed"] else "FAIL"
        line = f"criterion {number:2d} {status}  {c['title']}"
        terminalreporter.write_line(line + (f"  [{c['detail']}]" if c["detail"] else ""))
