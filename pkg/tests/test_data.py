from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recextract.data import (EmptyDatasetError, InteractionLog, SchemaError, build_sequences, kcore_filter,
                             load_csv, load_dataset, make_toy_dataset, read_sequences, save_dataset,
                             split_leave_two, write_sequences)


def _log(rows):
    us, its, ts = zip(*rows)
    return InteractionLog(list(us), list(its), [float(t) for t in ts])


def test_load_csv_basic(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("user_id,item_id,timestamp\nu1,a,1\nu2,b,2\nu1,b,3\n")
    log = load_csv(p)
    assert len(log) == 3 and set(log.users) == {"u1", "u2"}


def test_load_csv_keeps_duplicates(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("user_id,item_id,timestamp\nu1,a,1\nu1,a,1\nu1,b,2\n")
    assert len(load_csv(p)) == 3


def test_load_csv_errors(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("user,item_id,timestamp\nu1,a,1\n")
    with pytest.raises(SchemaError, match="missing column"):
        load_csv(p)
    p.write_text("user_id,item_id,timestamp\nu1,a,1\nu1,b,notatime\n")
    with pytest.raises(SchemaError, match=":3:"):
        load_csv(p)
    p.write_text("user_id,item_id,timestamp\nu1,a\n")
    with pytest.raises(SchemaError, match=":2:"):
        load_csv(p)


def test_load_csv_headerless_multichar_delimiter(tmp_path):
    p = tmp_path / "ratings.dat"
    p.write_text("1::10::5::978300760\n1::20::3::978302109\n")
    log = load_csv(p, delimiter="::", names=["user_id", "item_id", "rating", "timestamp"], rating_col="rating")
    assert log.items == ["10", "20"] and log.ratings == [5.0, 3.0]


def test_kcore_identity_and_star():
    rows = [("u", "a", 1), ("u", "b", 2), ("v", "a", 3)]
    assert len(kcore_filter(_log(rows), 1)) == 3
    star = [("u", i, n) for n, i in enumerate("abcde")]
    with pytest.raises(EmptyDatasetError):
        kcore_filter(_log(star), 2)


def _brute_kcore(rows, k):
    # remove everything violating the constraint until nothing changes
    cur = list(rows)
    while True:
        uc = Counter(r[0] for r in cur)
        ic = Counter(r[1] for r in cur)
        nxt = [r for r in cur if uc[r[0]] >= k and ic[r[1]] >= k]
        if len(nxt) == len(cur):
            return nxt
        cur = nxt


def test_kcore_small_log_matches_brute_force():
    rows = [("u1", "a", 1), ("u1", "b", 2), ("u2", "a", 3), ("u2", "b", 4), ("u3", "a", 5), ("u3", "c", 6)]
    got = kcore_filter(_log(rows), 2)
    assert sorted(zip(got.users, got.items)) == sorted((u, i) for u, i, _ in _brute_kcore(rows, 2))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=40), st.integers(1, 3))
def test_kcore_fixed_point(pairs, k):
    rows = [(f"u{u}", f"i{i}", n) for n, (u, i) in enumerate(pairs)]
    brute = _brute_kcore(rows, k)
    if not brute:
        with pytest.raises(EmptyDatasetError):
            kcore_filter(_log(rows), k)
        return
    got = kcore_filter(_log(rows), k)
    assert min(Counter(got.users).values()) >= k and min(Counter(got.items).values()) >= k
    assert sorted(zip(got.users, got.items)) == sorted((u, i) for u, i, _ in brute)


def test_build_sequences_remaps_and_orders():
    rows = [("b", "x", 3), ("b", "y", 1), ("b", "z", 2), ("a", "y", 5), ("a", "x", 4), ("a", "x", 6),
            ("c", "x", 1)]
    ds = build_sequences(_log(rows))
    assert ds.n_users == 2 and ds.dropped_users == 1
    assert ds.item_raw == [None, "x", "y", "z"]
    assert ds.sequences[0] == [1, 2, 1]  # user "a" by time
    assert ds.sequences[1] == [2, 3, 1]
    assert all(0 not in s for s in ds.sequences)


def test_split_leave_two():
    from recextract.data import SequenceDataset

    ds = SequenceDataset([[1, 2, 3, 4], [5, 6, 7]], 7)
    sp = split_leave_two(ds)
    assert sp.train == [[1, 2], [5]] and sp.val == [3, 6] and sp.test == [4, 7]
    assert sp.test_inputs() == [[1, 2, 3], [5, 6]]
    for u in range(sp.n_users):
        assert sp.full(u) == ds.sequences[u]


def test_toy_dataset_shape_and_determinism():
    a, b = make_toy_dataset(seed=3), make_toy_dataset(seed=3)
    assert a.sequences == b.sequences
    assert a.n_users == 200 and a.n_items == 50
    assert all(12 <= len(s) <= 30 for s in a.sequences)
    assert {i for s in a.sequences for i in s} <= set(range(1, 51))
    sp = split_leave_two(a)
    assert all(sp.full(u) == a.sequences[u] for u in range(sp.n_users))


def test_toy_dataset_has_sequential_structure():
    ds = make_toy_dataset()
    pairs = Counter((s[j], s[j + 1]) for s in ds.sequences for j in range(len(s) - 1))
    by_first = Counter()
    for (a, _), c in pairs.items():
        by_first[a] += c
    # the most frequent successor of an item is far above the 1/50 chance level
    top_share = np.mean([max(c for (a, _), c in pairs.items() if a == i) / by_first[i] for i in by_first])
    assert top_share > 0.2


def test_dataset_roundtrip(tmp_path):
    ds = make_toy_dataset(n_users=20)
    save_dataset(ds, tmp_path / "d")
    again = load_dataset(tmp_path / "d")
    assert again.sequences == ds.sequences and again.n_items == ds.n_items and again.max_len == ds.max_len
    line = (tmp_path / "d" / "sequences.txt").read_text().splitlines()[0]
    assert line == "0\t" + ",".join(map(str, ds.sequences[0]))


def test_read_sequences_errors(tmp_path):
    p = tmp_path / "s.txt"
    write_sequences(p, [[1, 2], [3]])
    assert read_sequences(p) == [[1, 2], [3]]
    p.write_text("0\t1,2\n5\t3\n")
    with pytest.raises(SchemaError, match=":2:"):
        read_sequences(p)
    with pytest.raises(FileNotFoundError, match="ingest"):
        load_dataset(tmp_path / "nothing")
