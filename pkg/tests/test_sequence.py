import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masc.errors import FormatError, ValidationError
from masc.mapping import ClusterMapping
from masc.metrics import shannon_entropy
from masc.sequence import (
    TokenSequence,
    coarsen,
    decode_random,
    empirical_distribution,
    load_sequence,
    parse_sequence,
    save_sequence,
)


def test_coarsen_example():
    m = ClusterMapping(3, 2, np.array([0, 0, 1]))
    out = coarsen(TokenSequence([2, 0, 1, 1], 3), m)
    assert out.tokens.tolist() == [1, 0, 0, 0] and out.vocab == 2


def test_coarsen_identity_and_empty():
    ident = ClusterMapping(5, 5, np.arange(5))
    seq = TokenSequence([4, 1, 1, 0], 5)
    assert coarsen(seq, ident) == seq
    assert len(coarsen(TokenSequence([], 5), ident)) == 0


def test_coarsen_rejects_bad_tokens():
    with pytest.raises(ValidationError, match="position 2"):
        TokenSequence([0, 1, 3], 3)
    m = ClusterMapping(3, 2, np.array([0, 0, 1]))
    with pytest.raises(ValidationError):
        coarsen(TokenSequence([0, 1], 4), m)


def test_decode_singletons_exact():
    ident = ClusterMapping(6, 6, np.arange(6))
    seq = TokenSequence([5, 3, 0, 0, 2], 6)
    for seed in (0, 1, 99):
        assert decode_random(seq, ident, seed).tokens.tolist() == [5, 3, 0, 0, 2]


def test_decode_frequency_is_uniform():
    assign = np.array([0, 0, 0, 0, 1, 2, 2, 1])  # members[1] == [4, 7]
    m = ClusterMapping(8, 3, assign)
    assert m.members[1].tolist() == [4, 7]
    out = decode_random(TokenSequence(np.ones(100_000, dtype=int), 3), m, seed=123)
    freq = float(np.mean(out.tokens == 4))
    assert abs(freq - 0.5) <= 0.01
    assert set(out.tokens.tolist()) == {4, 7}


def test_decode_chunked_equals_whole():
    m = ClusterMapping(10, 3, np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0]))
    seq = TokenSequence(np.random.default_rng(0).integers(0, 3, 1000), 3)
    whole = decode_random(seq, m, seed=5)
    parts = [
        decode_random(TokenSequence(seq.tokens[a:a + 137], 3), m, seed=5, offset=a).tokens
        for a in range(0, 1000, 137)
    ]
    assert np.array_equal(np.concatenate(parts), whole.tokens)


def test_decode_rejects_bad_vocab():
    m = ClusterMapping(3, 2, np.array([0, 0, 1]))
    with pytest.raises(ValidationError):
        decode_random(TokenSequence([0, 1, 2], 3), m, 0)


@st.composite
def seq_and_mapping(draw):
    n = draw(st.integers(1, 40))
    k = draw(st.integers(1, n))
    base = list(range(k)) + draw(st.lists(st.integers(0, k - 1), min_size=n - k, max_size=n - k))
    perm = draw(st.permutations(base))
    m = ClusterMapping.from_labels(perm)
    tokens = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=200))
    return TokenSequence(tokens, n), m


@settings(max_examples=200, deadline=None)
@given(seq_and_mapping(), st.integers(0, 2**32 - 1))
def test_round_trip_and_entropy_contraction(case, seed):
    seq, m = case
    coarse = coarsen(seq, m)
    assert len(coarse) == len(seq)
    assert coarsen(decode_random(coarse, m, seed), m) == coarse
    h_fine = shannon_entropy(empirical_distribution(seq))
    h_coarse = shannon_entropy(empirical_distribution(coarse))
    assert h_coarse <= h_fine


def test_empirical_distribution():
    assert empirical_distribution(TokenSequence([0, 0, 1, 1], 2)).tolist() == [0.5, 0.5]
    assert empirical_distribution(TokenSequence([3], 4)).tolist() == [0, 0, 0, 1]
    p = empirical_distribution(TokenSequence(np.random.default_rng(1).integers(0, 50, 777), 50))
    assert abs(p.sum() - 1.0) <= 1e-12
    with pytest.raises(ValidationError):
        empirical_distribution(TokenSequence([], 3))


def test_text_and_binary_round_trip(tmp_path):
    seq = TokenSequence([3, 0, 7, 7, 1], 8)
    save_sequence(seq, tmp_path / "s.txt")
    save_sequence(seq, tmp_path / "s.bin")
    assert (tmp_path / "s.txt").read_text() == "# vocab=8\n3\n0\n7\n7\n1\n"
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:4] == b"SEQ1" and len(raw) == 24 + 4 * 5
    assert load_sequence(tmp_path / "s.txt") == seq
    assert load_sequence(tmp_path / "s.bin") == seq


def test_headerless_text_needs_vocab():
    assert parse_sequence(b"1\n2\n", vocab=3) == TokenSequence([1, 2], 3)
    with pytest.raises(ValidationError):
        parse_sequence(b"1\n2\n")
    with pytest.raises(FormatError):
        parse_sequence(b"# vocab=3\n1\n-2\n")
    with pytest.raises(FormatError):
        parse_sequence(b"SEQ1\x01\x00\x00\x00" + bytes(16) + b"\x00")
