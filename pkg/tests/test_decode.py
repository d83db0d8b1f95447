import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_model
from kae.decode import (
    BeamConfig, Hypothesis, beam_decode, greedy_decode, model_beam, model_greedy, rescore, score,
)
from toy_tables import EOS, SOS, T, TableCache, enumerate_sequences


def test_score_examples():
    assert score(Hypothesis((SOS, 0), 0.0, 1, True)) == 0.0
    assert score(Hypothesis((SOS, 0, 1), -2.0, 2, True)) == pytest.approx(-2 / math.sqrt(2))
    with pytest.raises(ValueError):
        score(Hypothesis((SOS,), 0.0, 0, True))


def test_sqrt_rule_still_prefers_short_at_equal_token_probability():
    lp = math.log(0.9)
    short = score(Hypothesis((SOS,) + (0,) * 4, 4 * lp, 4, True))
    long = score(Hypothesis((SOS,) + (0,) * 16, 16 * lp, 16, True))
    assert long < short


def test_beam_config_bounds():
    with pytest.raises(ValueError):
        BeamConfig(0, 5)
    with pytest.raises(ValueError):
        BeamConfig(6, 5, vocab_size=5)
    with pytest.raises(ValueError):
        BeamConfig(1, 1)
    assert BeamConfig(5, 5, vocab_size=5).beam_size == 5


def test_exhaustive_enumeration_matches_full_width_beam():
    max_len = 4
    oracle = enumerate_sequences(TableCache(1, seed=3), max_len)
    assert len(oracle) == 40
    oracle.sort(key=lambda x: (-x[1], x[0]))
    got = beam_decode(TableCache(1, seed=3), 1, SOS, EOS, max_len, 64, banned=(SOS,))[0]
    assert [h.ids for h in got] == [ids for ids, _ in oracle]
    for h, (_, s) in zip(got, oracle):
        assert h.score == pytest.approx(s, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_beam_one_equals_greedy_on_tables(seed):
    n = 6
    g = greedy_decode(TableCache(n, seed), n, SOS, EOS, 6, banned=(SOS,))
    b = beam_decode(TableCache(n, seed), n, SOS, EOS, 6, 1, banned=(SOS,))
    assert [h.ids for h in g] == [hs[0].ids for hs in b]
    for x, y in zip(g, b):
        assert x.logprob_sum == pytest.approx(y[0].logprob_sum, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(2, 6), st.floats(0.2, 4.0))
def test_beam_output_structure(seed, beam, max_len, sharp):
    cache = TableCache(2, seed, sharp)
    out = beam_decode(cache, 2, SOS, EOS, max_len, beam, banned=(SOS,))
    ref = TableCache(1, seed, sharp)
    for hyps in out:
        assert 1 <= len(hyps) <= beam
        assert len({h.ids for h in hyps}) == len(hyps)
        keys = [(-h.score, h.ids) for h in hyps]
        assert keys == sorted(keys)
        for h in hyps:
            assert h.ids[0] == SOS and SOS not in h.ids[1:]
            assert EOS not in h.ids[1:-1]
            assert h.ids[-1] == EOS or len(h.ids) == max_len
            s = sum(ref.dist(h.ids[:k])[h.ids[k]] for k in range(1, len(h.ids)))
            assert h.logprob_sum == pytest.approx(s, abs=1e-12)


def test_greedy_stops_at_max_len_without_eos():
    class NeverEOS(TableCache):
        def dist(self, prefix):
            d = np.full(T, -50.0)
            d[0] = 0.0
            return d

    out = greedy_decode(NeverEOS(1), 1, SOS, EOS, 5, banned=(SOS,))[0]
    assert out.ids == (SOS, 0, 0, 0, 0) and out.nonpad_count == 4


def test_model_beam_one_equals_greedy(rng):
    m = small_model(dtype="float64", seed=2)
    mem = m.expand(rng.standard_normal((30, 2, 8)))
    g = model_greedy(m, mem)
    b = model_beam(m, mem, 1)
    assert [h.ids for h in g] == [hs[0].ids for hs in b]


def test_model_rescore_and_bans(rng):
    m = small_model(dtype="float64", seed=1)
    mem = m.expand(rng.standard_normal((10, 2, 8)))
    sos, pad = 6, 8
    for row, hyps in zip(mem, model_beam(m, mem, 4)):
        for h in hyps:
            assert abs(rescore(m, row, h) - h.score) <= 1e-9
            assert sos not in h.ids[1:] and pad not in h.ids


def test_model_beam_rejects_width_above_vocab(rng):
    m = small_model()
    with pytest.raises(ValueError):
        model_beam(m, m.expand(rng.standard_normal((1, 2, 8))), 10)


def test_chunking_does_not_change_results(rng):
    m = small_model(dtype="float64", seed=4)
    mem = m.expand(rng.standard_normal((9, 2, 8)))
    a = model_beam(m, mem, 3)
    b = model_beam(m, mem, 3, chunk=2)
    assert [[h.ids for h in x] for x in a] == [[h.ids for h in x] for x in b]
