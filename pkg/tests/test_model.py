import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polyglot_lm.corpus import BOS, build_vocab, encode_batch, parse_dictionary
from polyglot_lm.model import (
    MAGIC,
    ModelConfig,
    ModelFileError,
    dumps,
    embed_context,
    forward_sequence,
    language_projection,
    loads,
    local_context,
    new_model,
    output_distribution,
    output_logits,
)
from polyglot_lm.trainer import perplexity
from polyglot_lm.typology import TypologyTable, from_bits

from .conftest import MICRO_FEATURES, micro_model

VARIANTS = ["baseline", "lang", "typology"]


def test_fresh_model_is_uniform(micro_corpus, micro_typology):
    for variant in VARIANTS:
        m = micro_model(micro_corpus, micro_typology, variant, randomize_output=False)
        for e in micro_corpus:
            probs = forward_sequence(m, e)
            np.testing.assert_allclose(probs, 1.0 / len(m.vocab), rtol=1e-12)


def test_same_seed_identical_params(micro_corpus, micro_typology):
    a = micro_model(micro_corpus, micro_typology, "typology", randomize_output=False)
    b = micro_model(micro_corpus, micro_typology, "typology", randomize_output=False)
    assert a.params.keys() == b.params.keys()
    for k in a.params:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_default_dimensions_for_typology_layer():
    c = parse_dictionary(["w\ta b"], "it") + parse_dictionary(["v\tb c"], "fr")
    names = [f"f{i}" for i in range(190)]
    rng = np.random.default_rng(0)
    table = TypologyTable(tuple(names), {l: rng.integers(0, 2, 190).astype(float) for l in ("it", "fr")})
    m = new_model(ModelConfig(variant="typology"), build_vocab([c]), table)
    assert m.params["W_lang"].shape == (20, 190)
    assert m.params["X"].shape == (100, len(m.vocab))
    assert m.params["W_cx"].shape == (100, 300)
    assert m.params["W_out"].shape == (len(m.vocab), 100 * 20)


def test_baseline_has_no_language_parameters(micro_corpus):
    m = micro_model(micro_corpus, None, "baseline")
    assert not {"X_lang", "W_clang", "W_lang", "b_lang"} & m.params.keys()


def test_typology_requirements(micro_corpus, micro_typology):
    vocab = build_vocab([micro_corpus])
    with pytest.raises(ValueError):
        new_model(ModelConfig(variant="typology"), vocab)
    with pytest.raises(ValueError):
        new_model(ModelConfig(variant="lang"), vocab, micro_typology)
    partial = from_bits(MICRO_FEATURES, {"A": [0] * 7})
    with pytest.raises(KeyError, match="B"):
        new_model(ModelConfig(variant="typology"), vocab, partial)


def test_forget_bias_initialized_to_one(micro_corpus):
    m = micro_model(micro_corpus, None, "lang", randomize_output=False)
    H = m.config.hidden
    np.testing.assert_array_equal(m.params["lstm.b"][H : 2 * H], 1.0)
    np.testing.assert_array_equal(m.params["lstm.b"][:H], 0.0)


# --- building blocks ------------------------------------------------------------


def test_embed_single_context_is_column(micro_corpus):
    vocab = build_vocab([micro_corpus])
    m = new_model(ModelConfig(embed_dim=4, context=1, hidden=3, variant="lang"), vocab)
    x_t, x_lang = embed_context(m, [vocab.index("a")], "B")
    np.testing.assert_array_equal(x_t, m.params["X"][:, vocab.index("a")])
    np.testing.assert_array_equal(x_lang, m.params["X_lang"][:, 1])


def test_embed_shared_bos_segments(micro_corpus):
    m = micro_model(micro_corpus, None, "baseline")
    v = m.vocab
    x_t, _ = embed_context(m, [v.bos, v.bos, v.index("a")])
    d = m.config.embed_dim
    np.testing.assert_array_equal(x_t[:d], x_t[d : 2 * d])
    np.testing.assert_array_equal(x_t[2 * d :], m.params["X"][:, v.index("a")])


@given(st.integers(0, 5))
def test_embed_locality(j):
    c = parse_dictionary(["w\ta b", "v\tb a"], "A") + parse_dictionary(["u\ta a"], "B")
    vocab = build_vocab([c])
    m = new_model(ModelConfig(embed_dim=3, context=2, hidden=2, variant="lang"), vocab)
    ctx = [vocab.index("a"), vocab.index("b")]
    before, _ = embed_context(m, ctx)
    m.params["X"] = m.params["X"].copy()
    m.params["X"][:, j] += 1.0
    after, _ = embed_context(m, ctx)
    assert (not np.array_equal(before, after)) == (j in ctx)


def test_embed_out_of_range(micro_corpus):
    m = micro_model(micro_corpus, None, "baseline")
    with pytest.raises(IndexError):
        embed_context(m, [0, len(m.vocab)])


def test_local_context_zero_weights_is_bias(micro_corpus):
    m = micro_model(micro_corpus, None, "lang")
    for k in ("W_cx", "W_clang"):
        m.params[k] = np.zeros_like(m.params[k])
    x_t, x_lang = embed_context(m, [0, 1], "A")
    np.testing.assert_array_equal(local_context(m, x_t, x_lang), m.params["b_c"])


def test_local_context_baseline_ignores_language(micro_corpus):
    m = micro_model(micro_corpus, None, "baseline")
    x_t, _ = embed_context(m, [0, 1])
    np.testing.assert_array_equal(local_context(m, x_t, np.ones(4)), local_context(m, x_t, None))


def test_local_context_hand_computed():
    c = parse_dictionary(["w\ta"], "A")
    m = new_model(ModelConfig(embed_dim=1, context=2, hidden=2, variant="lang"), build_vocab([c]))
    m.params.update(
        W_cx=np.array([[1.0, 2.0], [0.0, -1.0]]),
        W_clang=np.array([[3.0], [1.0]]),
        b_c=np.array([0.5, 0.25]),
    )
    # [1*2 + 2*(-1) + 3*4 + 0.5, 0*2 - 1*(-1) + 1*4 + 0.25]
    out = local_context(m, np.array([2.0, -1.0]), np.array([4.0]))
    np.testing.assert_array_equal(out, [12.5, 5.25])


def test_language_projection_bias_only(micro_corpus, micro_typology):
    m = micro_model(micro_corpus, micro_typology, "typology")
    t = micro_typology.rows["A"]
    np.testing.assert_array_equal(language_projection(m, np.zeros(7)), np.tanh(m.params["b_lang"]))
    m.params["W_lang"] = np.zeros_like(m.params["W_lang"])
    m.params["b_lang"] = np.array([0.3, -2.0, 0.0])
    np.testing.assert_array_equal(language_projection(m, t), np.tanh([0.3, -2.0, 0.0]))


def test_language_projection_is_function_of_features(micro_corpus, micro_typology):
    m = micro_model(micro_corpus, micro_typology, "typology")
    t = micro_typology.rows["A"]
    f = language_projection(m, t)
    np.testing.assert_array_equal(language_projection(m, t.copy()), f)
    assert np.all(np.abs(f) < 1)


def test_language_projection_variant_mismatch(micro_corpus):
    with pytest.raises(ValueError):
        language_projection(micro_model(micro_corpus, None, "lang"), np.zeros(7))


def test_output_zero_layer_uniform(micro_corpus):
    m = micro_model(micro_corpus, None, "lang", randomize_output=False)
    p = output_distribution(m, np.array([0.3, -0.1, 0.9, 0.0, 0.2]))
    np.testing.assert_allclose(p, 1.0 / len(m.vocab), rtol=1e-12)


def test_output_typology_zero_f_gives_bias(micro_corpus, micro_typology):
    m = micro_model(micro_corpus, micro_typology, "typology")
    logits = output_logits(m, np.linspace(-1, 1, 5), np.zeros(3))
    np.testing.assert_array_equal(logits, m.params["b_out"])


def test_output_bilinear_scaling(micro_corpus, micro_typology):
    m = micro_model(micro_corpus, micro_typology, "typology")
    g = np.array([0.1, -0.4, 0.3, 0.9, -0.2])
    f = np.array([0.5, -0.25, 0.7])
    b = m.params["b_out"]
    base = output_logits(m, g, f) - b
    np.testing.assert_allclose(output_logits(m, g, 2 * f) - b, 2 * base, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(output_logits(m, 2 * g, f) - b, 2 * base, rtol=1e-12, atol=1e-15)


@given(
    arrays(np.float64, 5, elements=st.floats(-1, 1)),
    arrays(np.float64, 5, elements=st.floats(-1, 1)),
    arrays(np.float64, 3, elements=st.floats(-1, 1)),
    arrays(np.float64, 3, elements=st.floats(-1, 1)),
)
def test_output_logits_bilinear(g1, g2, f1, f2):
    c = parse_dictionary(["w\ta b"], "A")
    table = from_bits(["p", "q"], {"A": [1, 0]})
    m = new_model(ModelConfig(embed_dim=2, context=1, hidden=5, lang_dim=3, variant="typology"), build_vocab([c]), table)
    m.params["W_out"] = np.random.default_rng(0).normal(size=m.params["W_out"].shape)
    pre = lambda g, f: output_logits(m, g, f) - m.params["b_out"]
    np.testing.assert_allclose(pre(g1 + g2, f1), pre(g1, f1) + pre(g2, f1), atol=1e-12)
    np.testing.assert_allclose(pre(g1, f1 + f2), pre(g1, f1) + pre(g1, f2), atol=1e-12)


# --- full forward ---------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("cell", ["lstm", "rnn"])
def test_forward_normalized(micro_corpus, micro_typology, variant, cell):
    m = micro_model(micro_corpus, micro_typology, variant, cell)
    for e in micro_corpus:
        p = forward_sequence(m, e)
        assert p.shape == (len(e.phones) + 1, len(m.vocab))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_causality(micro_corpus, micro_typology, variant):
    m = micro_model(micro_corpus, micro_typology, variant)
    syms = (BOS, "a", "b", "b", "a", "</s>")
    full = forward_sequence(m, syms, "A")
    for n in range(2, len(syms)):
        prefix = forward_sequence(m, syms[:n], "A")
        np.testing.assert_array_equal(prefix, full[: n - 1])


def test_baseline_invariant_to_language(micro_corpus):
    m = micro_model(micro_corpus, None, "baseline")
    e = micro_corpus.entries[0]
    np.testing.assert_array_equal(forward_sequence(m, e.symbols, "A"), forward_sequence(m, e.symbols, "B"))


def test_lang_variant_uses_language(micro_corpus):
    m = micro_model(micro_corpus, None, "lang")
    e = micro_corpus.entries[0]
    assert not np.array_equal(forward_sequence(m, e.symbols, "A"), forward_sequence(m, e.symbols, "B"))


def test_typology_variant_consumes_features(micro_corpus, micro_typology):
    m = micro_model(micro_corpus, micro_typology, "typology")
    e = micro_corpus.entries[0]
    before = forward_sequence(m, e)
    rows = dict(micro_typology.rows)
    rows["A"] = 1.0 - rows["A"]
    m.typology = TypologyTable(micro_typology.feature_names, rows)
    assert not np.array_equal(forward_sequence(m, e), before)


@pytest.mark.parametrize("variant", VARIANTS)
def test_batched_matches_single_sequence(micro_corpus, micro_typology, variant):
    from polyglot_lm.model import batch_log_probs

    m = micro_model(micro_corpus, micro_typology, variant)
    b = encode_batch(micro_corpus.entries, m.vocab, m.config.context)
    steps = batch_log_probs(m, b.contexts, b.languages)
    for i, e in enumerate(micro_corpus):
        single = forward_sequence(m, e)
        for t in range(len(single)):
            np.testing.assert_allclose(np.exp(steps[t][i]), single[t], rtol=1e-12)


# --- serialization --------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_round_trip_bit_exact(micro_corpus, micro_typology, variant, tmp_path):
    from polyglot_lm.model import load, save

    m = micro_model(micro_corpus, micro_typology, variant)
    save(m, tmp_path / "m.bin")
    back = load(tmp_path / "m.bin")
    assert back.variant == variant
    assert back.config == m.config and back.vocab == m.vocab
    for k, v in m.params.items():
        assert back.params[k].tobytes() == v.tobytes()
    assert perplexity(back, micro_corpus) == perplexity(m, micro_corpus)
    assert dumps(back) == dumps(m)


def test_tampered_magic_rejected(micro_corpus):
    data = bytearray(dumps(micro_model(micro_corpus, None, "lang")))
    data[0] ^= 0xFF
    with pytest.raises(ModelFileError, match="magic"):
        loads(bytes(data))


def test_version_mismatch_rejected(micro_corpus):
    data = bytearray(dumps(micro_model(micro_corpus, None, "lang")))
    struct.pack_into("<I", data, len(MAGIC), 99)
    with pytest.raises(ModelFileError, match="version"):
        loads(bytes(data))


def test_corrupt_parameters_rejected(micro_corpus):
    data = bytearray(dumps(micro_model(micro_corpus, None, "lang")))
    data[-10] ^= 0x01
    with pytest.raises(ModelFileError, match="parameter"):
        loads(bytes(data))


def test_truncated_file_rejected(micro_corpus):
    data = dumps(micro_model(micro_corpus, None, "baseline"))
    with pytest.raises(ModelFileError):
        loads(data[:-20])


def test_gradients_flow_through_tape_for_every_parameter(micro_corpus, micro_typology):
    from polyglot_lm.trainer import loss_and_grads

    m = micro_model(micro_corpus, micro_typology, "typology")
    b = encode_batch(micro_corpus.entries, m.vocab, m.config.context)
    _, grads = loss_and_grads(m, b)
    assert grads.keys() == m.params.keys()
    for name in ("W_lang", "b_lang", "X_lang", "W_clang", "lstm.W_h"):
        assert np.any(grads[name] != 0), name
    # language-symbol and </s> columns of X are never read as context
    unused = [m.vocab.index(s) for s in m.vocab.language_symbols + ("</s>",)]
    np.testing.assert_array_equal(grads["X"][:, unused], 0.0)
