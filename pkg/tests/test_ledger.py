import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bci import (
    NegativeAmount,
    NonSquare,
    ParseError,
    PeerOutOfRange,
    SelfTransaction,
    ShareMatrix,
    free_riders,
    is_balanced,
    is_irreducible,
    load_ledger,
    record_transaction,
    save_ledger,
    strongly_connected_components,
    summarize,
)
from bci.errors import LedgerError

from conftest import PAPER_ROWS, random_ledger, random_symmetric


def reachability_oracle(dense):
    """Transitive closure by Warshall's algorithm on a dense 0/1 matrix."""
    n = len(dense)
    reach = [[i == j or dense[i][j] > 0 for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    reach[i][j] = reach[i][j] or reach[k][j]
    return reach


def test_record_first_paper_entry():
    ledger = record_transaction(ShareMatrix(4), 0, 1, 100)
    assert ledger[0, 1] == 100
    assert ledger.nnz == 1


def test_record_zero_is_noop():
    base = ShareMatrix.from_dense(PAPER_ROWS)
    assert record_transaction(base, 0, 1, 0) == base


def test_record_returns_copy():
    base = ShareMatrix(3)
    after = record_transaction(base, 0, 2, 5)
    assert base.nnz == 0 and after[0, 2] == 5


def test_record_accumulates():
    ledger = ShareMatrix(3)
    ledger.record(0, 1, 2.5).record(0, 1, 4)
    assert ledger[0, 1] == 6.5


@pytest.mark.parametrize("args, exc", [
    ((2, 2, 5), SelfTransaction),
    ((0, 1, -1), NegativeAmount),
    ((0, 4, 1), PeerOutOfRange),
    ((-1, 0, 1), PeerOutOfRange),
    ((0, 1, float("nan")), NegativeAmount),
])
def test_record_errors(args, exc):
    with pytest.raises(exc):
        ShareMatrix(4).record(*args)


def test_too_few_peers():
    with pytest.raises(LedgerError):
        ShareMatrix(1)


def test_summary_paper_matrix(paper_matrix):
    s = summarize(paper_matrix)
    assert s.upload_totals == (170, 90, 100, 120)
    assert s.download_totals == (80, 150, 140, 110)
    assert s.total == 480


def test_free_riders_paper_matrix(paper_matrix):
    assert free_riders(paper_matrix) == set()


def test_free_riders_zeroed_row():
    rows = [list(r) for r in PAPER_ROWS]
    rows[2] = [0, 0, 0, 0]
    assert free_riders(ShareMatrix.from_dense(rows)) == {2}


def test_isolated_peers_are_not_free_riders():
    assert free_riders(ShareMatrix(3)) == set()


def test_is_balanced_examples(paper_matrix):
    assert not is_balanced(paper_matrix, 0)
    two = ShareMatrix.from_dense([[0, 7], [7, 0]])
    assert is_balanced(two, 0)
    with pytest.raises(ValueError):
        is_balanced(two, -1)


def test_is_irreducible_examples(paper_matrix):
    assert is_irreducible(paper_matrix)
    rows = [list(r) for r in PAPER_ROWS]
    rows[1] = [0, 0, 0, 0]
    assert not is_irreducible(ShareMatrix.from_dense(rows))
    assert not is_irreducible(ShareMatrix.from_dense([[0, 1], [0, 0]]))


def test_scc_matches_reachability_oracle():
    rng = random.Random(11)
    for _ in range(300):
        n = rng.randint(2, 12)
        ledger = random_ledger(rng, n, rng.uniform(0.05, 0.5))
        reach = reachability_oracle(ledger.to_dense())
        expected = {frozenset(j for j in range(n) if reach[i][j] and reach[j][i]) for i in range(n)}
        got = {frozenset(c) for c in strongly_connected_components(ledger)}
        assert got == expected
        assert is_irreducible(ledger) == all(all(r) for r in reach)


def test_scc_deep_chain_no_recursion_limit():
    n = 5000
    ledger = ShareMatrix(n)
    for i in range(n - 1):
        ledger.record(i, i + 1, 1)
    assert len(strongly_connected_components(ledger)) == n
    ledger.record(n - 1, 0, 1)
    assert is_irreducible(ledger)


# -- file formats ---------------------------------------------------------

def test_load_dense_csv_paper():
    text = "\n".join(",".join(str(v) for v in r) for r in PAPER_ROWS)
    ledger = load_ledger(text.encode(), "dense-csv")
    assert ledger[0, 1] == 100
    assert ledger == ShareMatrix.from_dense(PAPER_ROWS)


def test_load_empty_sparse_json():
    ledger = load_ledger(b'{"n": 3, "entries": []}', "sparse-json")
    assert ledger.n == 3 and ledger.nnz == 0


def test_sparse_json_duplicates_accumulate():
    doc = {"n": 3, "entries": [{"from": 0, "to": 1, "amount": 2},
                               {"from": 0, "to": 1, "amount": 3.5}]}
    assert load_ledger(json.dumps(doc), "sparse-json")[0, 1] == 5.5


def test_negative_cell_rejected():
    with pytest.raises(NegativeAmount):
        load_ledger(b"0,1\n-2,0\n", "dense-csv")


def test_parse_error_location():
    with pytest.raises(ParseError) as info:
        load_ledger(b"0,1,2\n3,0,x\n1,1,0\n", "dense-csv")
    assert info.value.line == 2 and info.value.field == 3


@pytest.mark.parametrize("text, exc", [
    (b"0,1\n1,0,3\n", NonSquare),
    (b"0,1,2\n1,0,3\n", NonSquare),
    (b"1,1\n1,0\n", SelfTransaction),
    (b"", ParseError),
    (b"0,inf\n1,0\n", ParseError),
])
def test_dense_csv_errors(text, exc):
    with pytest.raises(exc):
        load_ledger(text, "dense-csv")


@pytest.mark.parametrize("doc, exc", [
    ('{"n": 3, "entries": [{"from": 0, "to": 1}]}', ParseError),
    ('{"n": 3, "entries": [{"from": 0, "to": 1, "amount": -1}]}', NegativeAmount),
    ('{"n": 3, "entries": [{"from": 0, "to": 3, "amount": 1}]}', PeerOutOfRange),
    ('{"n": 3, "entries": [{"from": 1, "to": 1, "amount": 1}]}', SelfTransaction),
    ('{"entries": []}', ParseError),
    ('{"n": 3, "entries": [', ParseError),
    ('{"n": "3", "entries": []}', ParseError),
])
def test_sparse_json_errors(doc, exc):
    with pytest.raises(exc):
        load_ledger(doc, "sparse-json")


def test_unknown_format():
    with pytest.raises(ValueError):
        save_ledger(ShareMatrix(2), "xml")


ledgers = st.integers(2, 8).flatmap(lambda n: st.builds(
    lambda entries: ShareMatrix(n, {k: v for k, v in entries.items() if k[0] != k[1]}),
    st.dictionaries(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                    st.floats(0, 1e9, allow_nan=False, allow_infinity=False)
                    | st.integers(0, 1000).map(float),
                    max_size=n * n)))


@given(ledgers, st.sampled_from(["dense-csv", "sparse-json"]))
def test_round_trip(ledger, fmt):
    assert load_ledger(save_ledger(ledger, fmt), fmt) == ledger


@given(st.integers(2, 8), st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7),
                                             st.floats(0, 1e6, allow_nan=False)), max_size=60))
def test_totals_match_recomputation(n, txs):
    ledger = ShareMatrix(n)
    dense = [[0.0] * n for _ in range(n)]
    for i, j, a in txs:
        if i < n and j < n and i != j:
            ledger.record(i, j, a)
            dense[i][j] += a
    s = summarize(ledger)
    assert s.upload_totals == pytest.approx([sum(r) for r in dense], rel=1e-12)
    assert s.download_totals == pytest.approx([sum(c) for c in zip(*dense)], rel=1e-12)
    assert sum(s.upload_totals) == pytest.approx(s.total, rel=1e-12)
    assert sum(s.download_totals) == pytest.approx(s.total, rel=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_symmetric_is_balanced(seed):
    rng = random.Random(seed)
    assert is_balanced(random_symmetric(rng, rng.randint(2, 15)), 0)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_free_riders_against_dense_scan(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 15)
    ledger = random_ledger(rng, n, rng.uniform(0.0, 0.4))
    dense = ledger.to_dense()
    expected = {i for i in range(n)
                if all(v == 0 for v in dense[i]) and any(dense[k][i] > 0 for k in range(n))}
    assert free_riders(ledger) == expected
