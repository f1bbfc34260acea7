from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from brepwire.pipeline import collect_canonical_curves, prepare_model
from brepwire.quantize import fit_curve_codebook
from brepwire.synth import FamilySpec, generate_corpus, generate_model

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")


def cube_model(side: float = 1.0):
    return generate_model(FamilySpec("Box", {"w": side, "h": side, "d": side}))


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(60, seed=7)


@pytest.fixture(scope="session")
def curve_corpus(small_corpus):
    curves = []
    for model in small_corpus:
        prepared, conflicts = prepare_model(model)
        if not conflicts:
            curves.extend(collect_canonical_curves(prepared))
    return curves


@pytest.fixture(scope="session")
def codebook(curve_corpus):
    return fit_curve_codebook(curve_corpus, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
