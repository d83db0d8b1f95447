import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_model
from kae.metrics import (
    MetricsRecord, evaluate_nuvr, novelty, reconstruction, select_from_beam, uniqueness, validity,
)
from kae.vocab import build_vocabulary


def test_fraction_examples():
    assert novelty(["A", "B"], {"A"}) == 0.5
    assert novelty(["A", "B"], {"C"}) == 1.0
    assert novelty(["A"], ["A", "B"]) == 0.0
    assert uniqueness(["A", "A", "B"]) == pytest.approx(2 / 3)
    assert uniqueness(["A"] * 4) == 0.25
    assert validity(["CCO", "C1CC"]) == 0.5
    assert validity(["CCO", "c1ccccc1"]) == 1.0


def test_empty_lists_warn_and_return_zero(caplog):
    with caplog.at_level(logging.WARNING):
        assert novelty([], set()) == 0.0
        assert uniqueness([]) == 0.0
        assert validity([]) == 0.0
    assert len(caplog.records) == 3


def test_record_products():
    r = MetricsRecord.from_parts(0.5, 0.8, 0.9, 0.5, 100, 2)
    assert r.nuv == pytest.approx(0.36) and r.nuvr == pytest.approx(0.18)
    assert set(r.as_dict()) >= {"novelty", "nuvr", "sample_count", "repeats", "beam"}


def test_selection_policy_order():
    assert select_from_beam(["CCO", "CC"], set(), set()) == "CCO"
    assert select_from_beam(["C1", "C(", "CCN"], set(), set()) == "CCN"
    assert select_from_beam(["C1", "C(", "C)"], set(), set()) == "C1"
    # valid but seen or in training falls back to first valid
    assert select_from_beam(["CC", "CO", "C("], {"CO"}, {"CC"}) == "CC"
    with pytest.raises(ValueError):
        select_from_beam([], set(), set())


words = st.lists(st.sampled_from(["C", "CC", "CO", "C1", "C(", "c1ccccc1", "N#N", "O="]), min_size=1, max_size=8)


@given(words, st.sets(st.sampled_from(["C", "CC", "CO"])), st.sets(st.sampled_from(["C", "N#N"])))
def test_selection_never_invalid_when_a_valid_exists(cands, seen, train):
    out = select_from_beam(cands, seen, train)
    assert out in cands
    if any(validity([c]) for c in cands):
        assert validity([out]) == 1.0


@given(words, st.sets(st.sampled_from(["C", "CC", "CO"])))
def test_fractions_in_unit_interval(gen, train):
    for f in (novelty(gen, train), uniqueness(gen), validity(gen)):
        assert 0.0 <= f <= 1.0


def test_untrained_reconstruction_and_protocol_shape():
    corpus = ["CCO", "CCN", "C=O"]
    vocab = build_vocabulary(corpus)
    m = small_model(vocab_size=vocab.size, max_len=5, seed=0)
    assert 0.0 <= reconstruction(m, vocab, corpus) <= 1.0
    rec = evaluate_nuvr(m, vocab, corpus, corpus, np.random.default_rng(0), n_samples=12, repeats=2, beam=2)
    assert (rec.sample_count, rec.repeats, rec.beam) == (12, 2, 2)
    assert rec.nuvr <= min(rec.novelty, rec.uniqueness, rec.validity, rec.reconstruction) + 1e-12
    again = evaluate_nuvr(m, vocab, corpus, corpus, np.random.default_rng(0), n_samples=12, repeats=2, beam=2)
    assert again == rec
