from __future__ import annotations

import pytest

from toymodel.config import ToyConfig
from toymodel.data import build_face_bundles, build_token_corpus
from toymodel.protocol import GrammarClient

AR_MIX = {"Box": 1, "LBracket": 1, "PrismFillet": 1, "CylinderSegment": 1}


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("artifacts")


@pytest.fixture(scope="session")
def token_corpus(workdir):
    return build_token_corpus(workdir, count=50, seed=21, mix=AR_MIX)


@pytest.fixture(scope="session")
def face_bundles(workdir):
    return build_face_bundles(workdir, count=30, seed=33)


@pytest.fixture(scope="session")
def client():
    with GrammarClient() as c:
        yield c


@pytest.fixture(scope="session")
def trained_ar(token_corpus):
    from toymodel.armodel import train_ar_toy

    config = ToyConfig(epochs=110, lr=3e-3, seed=0)
    model, metrics = train_ar_toy(token_corpus, config)
    return model, metrics
