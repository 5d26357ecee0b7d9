"""Shared fixtures and the acceptance-criteria reporting hook."""

import pytest
import torch

from medvqa.corpus import DatasetSplit
from medvqa.models.config import ModelConfig
from medvqa.synthetic import synthetic_corpus
from medvqa.training.trainer import ArrayImageStore, OptimizerConfig, TrainConfig, train


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(criterion): marks a release acceptance check by name"
    )
    torch.set_num_threads(1)


def pytest_runtest_logreport(report):
    """Print one PASS/FAIL line per acceptance criterion."""
    if report.when != "call":
        return
    marker = None
    for prop, value in report.user_properties:
        if prop == "acceptance_criterion":
            marker = value
    if marker is None:
        return
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {marker}: {outcome}", flush=True)


@pytest.fixture(autouse=True)
def _record_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker is not None:
        criterion = marker.kwargs.get("criterion") or (marker.args[0] if marker.args else "?")
        request.node.user_properties.append(("acceptance_criterion", criterion))
    yield


@pytest.fixture(scope="session")
def synthetic_fixture():
    """20 images, 100 QA pairs over a 10-answer vocabulary, with pixel arrays."""
    images, pairs, arrays = synthetic_corpus(n_images=20, side=32, seed=0)
    return images, pairs, arrays


@pytest.fixture(scope="session")
def overfit_run(synthetic_fixture, tmp_path_factory):
    """Memorization run used by several checks: 200 epochs on the full corpus.

    Returns (TrainResult, images, pairs, arrays, store, elapsed_seconds).
    """
    import time

    images, pairs, arrays = synthetic_fixture
    split = DatasetSplit(train=tuple(r.image_id for r in images), val=(), test=())
    model_config = ModelConfig(
        d=32, side=32, embed_dim=32, hidden_dim=32, cnn_channels=(8, 16, 32, 32), seed=0
    )
    train_config = TrainConfig(
        epochs=200, batch_size=5, seed=0, optimizer=OptimizerConfig(rho=0.95, eps=1e-6, lr=1.0)
    )
    store = ArrayImageStore(arrays, side=32, channels=1)
    out_dir = tmp_path_factory.mktemp("overfit")
    start = time.perf_counter()
    result = train(images, pairs, split, model_config, train_config, store, out_dir)
    elapsed = time.perf_counter() - start
    return result, images, pairs, arrays, store, elapsed
