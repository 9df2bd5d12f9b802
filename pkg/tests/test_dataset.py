import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crab.dataset import (
    LabeledCorpus, LabeledExample, SplitSpec, batches, class_distribution, dump_corpus, load_corpus,
    parse_corpus, split_sizes, stratified_split, stratified_split_indices,
)
from crab.errors import ConfigError, LabelError, ParseError, StratificationError
from crab.rng import XorShift64Star, derive_seed, splitmix64

HEADER = "#classes\tnormal\tabusive\tspam\thateful\n"


def write(tmp_path, content, name="c.tsv"):
    p = tmp_path / name
    p.write_text(content, encoding="utf-8")
    return p


def test_load_three_rows_in_order(tmp_path):
    p = write(tmp_path, HEADER + "spam\tbuy now\nnormal\thi there\nhateful\tugh\n")
    c = load_corpus(p)
    assert c.class_names == ["normal", "abusive", "spam", "hateful"]
    assert [(e.label, e.text) for e in c.examples] == [(2, "buy now"), (0, "hi there"), (3, "ugh")]


def test_unknown_label_reports_line(tmp_path):
    p = write(tmp_path, HEADER + "normal\tok\nweird\tnope\n")
    with pytest.raises(LabelError) as err:
        load_corpus(p)
    assert err.value.line == 3


def test_malformed_row_reports_line(tmp_path):
    p = write(tmp_path, HEADER + "normal no tab here\n")
    with pytest.raises(ParseError, match="line 2"):
        load_corpus(p)
    with pytest.raises(ParseError, match="line 1"):
        parse_corpus("normal\thi\n")


def test_empty_data_section(tmp_path):
    c = load_corpus(write(tmp_path, HEADER))
    assert len(c) == 0 and c.num_classes == 4
    assert class_distribution(c) == [0, 0, 0, 0]


def test_escapes_roundtrip():
    c = LabeledCorpus([LabeledExample("a\tb\nc\\d\re", 1)], ["x", "y"])
    text = dump_corpus(c)
    assert text == "#classes\tx\ty\ny\ta\\tb\\nc\\\\d\\re\n"
    assert parse_corpus(text).examples == c.examples
    with pytest.raises(ParseError):
        parse_corpus("#classes\tx\nx\tbad \\q escape\n")


def test_class_distribution_table_counts():
    counts = [53851, 27150, 14030, 4965]
    c = LabeledCorpus([LabeledExample("", k) for k, n in enumerate(counts) for _ in range(n)], ["a", "b", "c", "d"])
    assert class_distribution(c) == counts
    assert sum(class_distribution(c)) == 99996
    one = LabeledCorpus([LabeledExample("x", 2)], ["a", "b", "c", "d"])
    assert class_distribution(one) == [0, 0, 1, 0]


@pytest.mark.parametrize("n, expected", [(10, (8, 1, 1)), (7, (5, 1, 1)), (1, (0, 0, 1)), (3, (2, 0, 1))])
def test_floor_rule(n, expected):
    # oracle: floor(0.8 n), floor(0.9 n) - floor(0.8 n), remainder, with exact rationals
    a = (8 * n) // 10
    b = (9 * n) // 10 - a
    assert (a, b, n - a - b) == expected
    assert split_sizes(n, (0.8, 0.1, 0.1)) == expected


def _corpus(counts):
    return LabeledCorpus([LabeledExample(f"{k}-{i}", k) for k, n in enumerate(counts) for i in range(n)],
                         [f"c{k}" for k in range(len(counts))])


def test_split_determinism_and_partition():
    c = _corpus([10, 7, 3])
    first = stratified_split_indices(c.labels, c.class_names, SplitSpec(seed=5))
    again = stratified_split_indices(c.labels, c.class_names, SplitSpec(seed=5))
    other = stratified_split_indices(c.labels, c.class_names, SplitSpec(seed=6))
    assert first == again
    assert first != other
    assert sorted(first[0] + first[1] + first[2]) == list(range(len(c)))
    train, val, test = stratified_split(c, SplitSpec(seed=5))
    assert [class_distribution(s) for s in (train, val, test)] == [[8, 5, 2], [1, 1, 0], [1, 1, 1]]


def test_split_empty_class_named():
    with pytest.raises(StratificationError, match="c1"):
        stratified_split(_corpus([3, 0, 2]), SplitSpec())


def test_split_all_train():
    train, val, test = stratified_split(_corpus([4, 5]), SplitSpec((1.0, 0.0, 0.0)))
    assert (len(train), len(val), len(test)) == (9, 0, 0)


def test_split_spec_validation():
    with pytest.raises(ConfigError):
        SplitSpec((0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        SplitSpec((1.2, -0.1, -0.1))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 60), min_size=1, max_size=5),
       st.tuples(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20)).filter(lambda t: sum(t) > 0),
       st.integers(0, 2**63))
def test_split_fractions_within_one_over_n(counts, weights, seed):
    total = sum(weights)
    ratios = tuple(w / total for w in weights)
    c = _corpus(counts)
    parts = stratified_split_indices(c.labels, c.class_names, SplitSpec(ratios, seed))
    assert Counter(parts[0] + parts[1] + parts[2]) == Counter(range(len(c)))
    for k, n in enumerate(counts):
        for part, r in zip(parts, ratios):
            got = sum(1 for i in part if c.labels[i] == k)
            assert abs(got / n - r) <= 1 / n + 1e-12


def test_batches_sizes_and_coverage():
    items = list(range(100))
    out = batches(items, 32, shuffle_seed=1)
    assert [len(b) for b in out] == [32, 32, 32, 4]
    assert sorted(x for b in out for x in b) == items
    assert out != batches(items, 32)  # shuffled
    assert batches(items, 32, shuffle_seed=1) == out
    singles = batches(items[:5], 1, shuffle_seed=3)
    assert all(len(b) == 1 for b in singles) and sorted(b[0] for b in singles) == items[:5]
    with pytest.raises(ConfigError):
        batches(items, 0)


def test_xorshift_reference_values():
    # splitmix64 reference output for seed 0 (Vigna's reference implementation)
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    rng = XorShift64Star(0)
    x = splitmix64(0)
    x ^= x >> 12
    x ^= (x << 25) & ((1 << 64) - 1)
    x ^= x >> 27
    assert rng.next_u64() == (x * 0x2545F4914F6CDD1D) % 2**64


def test_xorshift_uniformity_rough():
    rng = XorShift64Star(123)
    draws = [rng.below(4) for _ in range(8000)]
    for k in range(4):
        assert abs(draws.count(k) / 8000 - 0.25) < 0.03
    assert derive_seed(1, 2) != derive_seed(1, 3) != derive_seed(2, 2)
    u = XorShift64Star(9).uniform(-1, 1, (50, 3))
    assert u.shape == (50, 3) and u.min() >= -1 and u.max() < 1
    assert not math.isclose(u.mean(), u[0, 0])
