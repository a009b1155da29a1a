import numpy as np
import pytest
from hypothesis import settings

from polyglot_lm.corpus import build_vocab, parse_dictionary
from polyglot_lm.model import ModelConfig, new_model
from polyglot_lm.typology import from_bits

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


MICRO_FEATURES = [f"f{i}" for i in range(7)]


@pytest.fixture
def micro_corpus():
    """2 languages, |V| = 6: phones {a, b}, languages {A, B}, <s>, </s>."""
    a = parse_dictionary(["w1\ta b a", "w2\tb b a"], "A")
    b = parse_dictionary(["w3\tb a a", "w4\ta a b"], "B")
    return a + b


@pytest.fixture
def micro_typology():
    return from_bits(MICRO_FEATURES, {"A": [1, 0, 1, 0, 1, 1, 0], "B": [0, 1, 1, 0, 0, 1, 1]})


def micro_model(corpus, typology, variant, cell="lstm", seed=3, randomize_output=True):
    vocab = build_vocab([corpus])
    cfg = ModelConfig(embed_dim=4, context=2, hidden=5, lang_dim=3, variant=variant, cell=cell, seed=seed)
    model = new_model(cfg, vocab, typology if variant == "typology" else None)
    if randomize_output:
        # zero output layer makes every upstream gradient vanish; perturb it
        rng = np.random.default_rng(seed)
        for name in ("W_out", "b_out"):
            model.params[name] = rng.normal(scale=0.5, size=model.params[name].shape)
        model.params["b_c"] = rng.normal(scale=0.3, size=model.params["b_c"].shape)
    return model


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[name])
