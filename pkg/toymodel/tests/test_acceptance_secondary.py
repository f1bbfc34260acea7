"""Secondary acceptance: the two learned-component criteria at full budget.

Run with `pytest tests/test_acceptance_secondary.py -v -s`; each criterion
prints one PASS/FAIL line. Deterministic for the fixed seeds.
"""

from toymodel.armodel import train_ar_toy
from toymodel.config import ToyConfig
from toymodel.refiner import batch_from_bundles, train_refiner
from toymodel.sampler import constrained_sample, sample_parse_rate


def report(name: str, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def test_toy_ar_acceptance(token_corpus, trained_ar, client):
    """>= 0.99 held-in accuracy; masked sampling 100% parseable, unmasked
    strictly fewer; zeroed structural embeddings strictly worse at equal steps."""
    model, metrics = trained_ar
    accuracy = metrics["accuracy"]

    config = ToyConfig(epochs=110, lr=3e-3, seed=0)
    _, ablated = train_ar_toy(token_corpus, config, use_structural=False)

    sequences = constrained_sample(model, client, count=100, p=0.95, seed=11)
    masked_ok = len(sequences)
    for seq in sequences:
        assert client.accepts(seq)
    unmasked_rate = sample_parse_rate(model, client, count=100, masked=False,
                                      p=0.95, seed=11)
    ok = (accuracy >= 0.99
          and masked_ok == 100
          and unmasked_rate < 1.0
          and ablated["accuracy"] < accuracy)
    report("toy AR", ok,
           f"accuracy {accuracy:.4f} >= 0.99; masked {masked_ok}/100 parseable, "
           f"unmasked rate {unmasked_rate:.2f} < 1.0; ablated accuracy "
           f"{ablated['accuracy']:.4f} < {accuracy:.4f}")
    assert accuracy >= 0.99
    assert masked_ok == 100
    assert unmasked_rate < 1.0
    assert ablated["accuracy"] < accuracy


def test_toy_refiner_acceptance(face_bundles):
    """With-prior validation MSE strictly below without-prior at equal budget."""
    batch = batch_from_bundles(face_bundles)
    _, with_prior = train_refiner(batch, use_prior=True, epochs=150, seed=0)
    _, without_prior = train_refiner(batch, use_prior=False, epochs=150, seed=0)
    ok = with_prior["val_mse"] < without_prior["val_mse"]
    report("toy refiner", ok,
           f"val MSE with prior {with_prior['val_mse']:.3e} < without "
           f"{without_prior['val_mse']:.3e}")
    assert with_prior["val_mse"] < without_prior["val_mse"]
