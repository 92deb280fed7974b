import itertools
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from sttgen.algebra import (
    ParseError,
    TensorAccess,
    TensorAlgebra,
    load_tensor_algebra,
    parse_tensor_algebra,
)

BENCH = Path(__file__).resolve().parents[1] / "benchmarks"


def test_gemm_matrices():
    ta = parse_tensor_algebra("C[m,n] += A[m,k] * B[n,k]; m=16 n=16 k=16")
    assert ta.iterator_names == ("m", "n", "k")
    assert ta.bounds == (16, 16, 16)
    a, b = ta.inputs
    assert a.tensor_name == "A"
    assert a.access_matrix == ((1, 0, 0), (0, 0, 1))
    assert b.access_matrix == ((0, 1, 0), (0, 0, 1))
    assert ta.output.access_matrix == ((1, 0, 0), (0, 1, 0))
    assert ta.reduction_iterators == ("k",)


def test_identity_copy():
    ta = parse_tensor_algebra("C[i] += A[i]; i=4")
    assert ta.output.access_matrix == ((1,),)
    assert ta.inputs[0].access_matrix == ((1,),)
    assert ta.reduction_iterators == ()


def test_conv2d_stencil_row():
    ta = parse_tensor_algebra(
        "C[k,y,x] += A[c,y+p,x+q] * B[k,c,p,q]; k=4 c=4 y=8 x=8 p=3 q=3"
    )
    a = ta.inputs[0]
    # iterators ordered (k,c,y,x,p,q); dim 2 of A is y+p
    assert a.access_matrix[1] == (0, 0, 1, 0, 1, 0)
    assert a.access_matrix[2] == (0, 0, 0, 1, 0, 1)
    # stencil widens the input: extent = (y-1)+(p-1)+1 along dim 2
    assert ta.extent_of(a) == (4, 10, 10)


def test_three_inputs():
    ta = parse_tensor_algebra("D[i,j] += A[i,k,l] * B[k,j] * C[l,j]; i=4 j=4 k=2 l=2")
    assert len(ta.inputs) == 3
    assert ta.reduction_iterators == ("k", "l")


def test_benchmarks_parse_and_roundtrip():
    files = sorted(BENCH.glob("*.ta"))
    assert len(files) == 6
    for f in files:
        ta = load_tensor_algebra(f)
        again = parse_tensor_algebra(ta.pretty(), name=ta.name)
        assert again == ta


def test_unknown_iterator_position():
    with pytest.raises(ParseError) as e:
        parse_tensor_algebra("C[m] += A[z]; m=4")
    assert "unknown iterator 'z'" in str(e.value)
    assert e.value.line == 1 and e.value.col == 11


def test_syntax_error_position():
    with pytest.raises(ParseError) as e:
        parse_tensor_algebra("C[m,] += A[m]; m=4")
    assert e.value.col == 5


def test_missing_bounds():
    with pytest.raises(ParseError, match="missing iterator bounds"):
        parse_tensor_algebra("C[m] += A[m];")


def test_rank_mismatch_across_uses():
    with pytest.raises(ParseError, match="used with 1 dims, previously 2"):
        parse_tensor_algebra("C[m,n] += C[m] * B[n,k]; m=4 n=4 k=4")


def test_duplicate_iterator_declaration():
    with pytest.raises(ParseError, match="declared twice"):
        parse_tensor_algebra("C[m] += A[m]; m=4 m=5")


def test_repeated_iterator_in_index():
    with pytest.raises(ParseError, match="repeated in one index"):
        parse_tensor_algebra("C[m] += A[m+m]; m=4")


def test_zero_bound_rejected():
    with pytest.raises(ValueError, match="bound 0"):
        parse_tensor_algebra("C[m] += A[m]; m=0")


def test_four_inputs_rejected():
    with pytest.raises(ValueError, match="1..3 input"):
        parse_tensor_algebra("E[i] += A[i] * B[i] * C[i] * D[i]; i=2")


def test_comments_ignored():
    ta = parse_tensor_algebra("# title\nC[m] += A[m]; m=4  # trailing\n")
    assert ta.bounds == (4,)


# --- generated round-trip and extent properties ---------------------------

_NAMES = "ijklmnpq"


@st.composite
def algebras(draw):
    n_it = draw(st.integers(2, 5))
    its = tuple(
        (name, draw(st.integers(1, 6))) for name in _NAMES[:n_it]
    )
    tensor_pool = iter("ABCDEF")

    def access(tname):
        rank = draw(st.integers(1, 3))
        rows = []
        for _ in range(rank):
            k = draw(st.integers(1, min(2, n_it)))
            cols = draw(
                st.lists(st.integers(0, n_it - 1), min_size=k, max_size=k, unique=True)
            )
            row = [0] * n_it
            for c in cols:
                row[c] = 1
            rows.append(tuple(row))
        return TensorAccess(tname, tuple(rows), (0,) * rank)

    out = access(next(tensor_pool))
    ins = tuple(access(next(tensor_pool)) for _ in range(draw(st.integers(1, 3))))
    return TensorAlgebra(out.tensor_name, its, out, ins)


@given(algebras())
def test_pretty_roundtrip(ta):
    assert parse_tensor_algebra(ta.pretty()) == ta


@given(algebras())
def test_indices_within_inferred_extent(ta):
    ext = {id(a): ta.extent_of(a) for a in ta.all_accesses}
    pts = itertools.product(*(range(b) for b in ta.bounds))
    for x in itertools.islice(pts, 200):
        for acc in ta.all_accesses:
            idx = acc.index_of(x)
            assert all(0 <= i < e for i, e in zip(idx, ext[id(acc)]))
