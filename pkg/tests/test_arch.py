"""Architecture generation: module table, interconnect, banks, controller."""

import itertools
import json
from collections import Counter
from pathlib import Path

import pytest

from sttgen.algebra import parse_tensor_algebra
from sttgen.arch import (
    ArchSpec,
    UnsupportedDesign,
    analyze_design,
    arch_from_json,
    arch_to_json,
    generate_arch,
    iter_stages,
    select_pe_module,
)
from sttgen.stt import (
    DataflowKind,
    IORole,
    ReuseSubKind,
    SttMatrix,
    TensorDataflow,
)

GEMM4 = "C[m,n] += A[m,k] * B[n,k]; m=4 n=4 k=4"
GEMM16 = "C[m,n] += A[m,k] * B[n,k]; m=16 n=16 k=16"
SKEW = ((1, 0, 0), (0, 1, 0), (1, 1, 1))
MNK = ("m", "n", "k")


def gen(src, rows, sel, array):
    alg = parse_tensor_algebra(src)
    return generate_arch(alg, SttMatrix(rows, sel), array)


# --- module selection ---------------------------------------------------------


def modules_of(arch: ArchSpec) -> list:
    return [list(arch.pe_modules[p.name]) for p in arch.plans]


def test_output_stationary_modules_a_a_d():
    arch = gen(GEMM16, SKEW, MNK, (16, 16))
    assert modules_of(arch) == [["a"], ["a"], ["d"]]


def test_weight_stationary_modules_a_c_b():
    # B held in place, A marching, C riding the chains out
    arch = gen(GEMM4, ((0, 1, 0), (0, 0, 1), (1, 1, 1)), MNK, (4, 4))
    kinds = [p.dataflow.kind for p in arch.plans]
    assert kinds == [
        DataflowKind.SYSTOLIC,
        DataflowKind.STATIONARY,
        DataflowKind.SYSTOLIC,
    ]
    assert modules_of(arch) == [["a"], ["c"], ["b"]]


def test_row_stationary_style_modules_e_c_b():
    arch = gen(GEMM4, ((0, 1, 0), (0, 0, 1), (1, 0, 1)), MNK, (4, 4))
    kinds = [p.dataflow.kind for p in arch.plans]
    assert kinds == [
        DataflowKind.MULTICAST,
        DataflowKind.STATIONARY,
        DataflowKind.SYSTOLIC,
    ]
    assert modules_of(arch) == [["e"], ["c"], ["b"]]


def test_module_table_rejects_role_mismatch():
    mc_out = TensorDataflow(
        kind=DataflowKind.MULTICAST, io_role=IORole.OUTPUT,
        sub_kind=None, direction=((1, 0, 0),),
    )
    with pytest.raises(ValueError):
        select_pe_module(mc_out)
    rt_in = TensorDataflow(
        kind=DataflowKind.REDUCTION_TREE, io_role=IORole.INPUT,
        sub_kind=None, direction=((1, 0, 0),),
    )
    with pytest.raises(ValueError):
        select_pe_module(rt_in)


# --- interconnect -------------------------------------------------------------


def test_systolic_links_count_and_shape():
    arch = gen(GEMM4, SKEW, MNK, (4, 4))
    a_links = [l for l in arch.links if l.tensor == "A"]
    # A flows along rows: 4 rows x 3 hops
    assert len(a_links) == 12
    assert all(
        l.dst == (l.src[0], l.src[1] + 1) and l.delay == 1 for l in a_links
    )
    b_links = [l for l in arch.links if l.tensor == "B"]
    assert len(b_links) == 12
    assert all(l.dst == (l.src[0] + 1, l.src[1]) for l in b_links)


def test_reduction_trees_four_of_four_depth_two():
    # p = (k, n), t = m: C reduces along rows into one tree per column
    arch = gen(GEMM4, ((0, 0, 1), (0, 1, 0), (1, 0, 0)), MNK, (4, 4))
    c = arch.plans[-1]
    assert c.dataflow.kind is DataflowKind.REDUCTION_TREE
    trees = [t for t in arch.reduction_trees if t.tensor == "C"]
    assert len(trees) == 4
    assert all(len(t.members) == 4 for t in trees)
    assert all(t.depth == 2 for t in trees)


def test_unicast_one_bank_per_pe():
    arch = gen(
        "C[m,n] += A[m,k,n] * B[m,k]; m=2 n=2 k=2", SKEW, MNK, (2, 2)
    )
    assert arch.plans[0].dataflow.kind is DataflowKind.UNICAST
    a_banks = [b for b in arch.banks if b.tensor == "A"]
    assert len(a_banks) == 4
    assert all(b.kind == "unicast" and len(b.pes) == 1 for b in a_banks)


def test_broadcast_single_bank_for_all_pes():
    # B touches no selected iterator, so every PE shares one bank
    arch = gen(
        "D[i,j,k] += A[i,l,m] * B[l,j] * C[m,k]; i=4 j=4 k=4 l=4 m=4",
        SKEW, ("i", "k", "m"), (4, 4),
    )
    b_plan = arch.plans[1]
    assert b_plan.dataflow.kind is DataflowKind.REUSE2D
    assert b_plan.dataflow.sub_kind is ReuseSubKind.BROADCAST
    assert b_plan.reuse.dimension == 3
    b_banks = [b for b in arch.banks if b.tensor == "B"]
    assert len(b_banks) == 1
    assert len(b_banks[0].pes) == 16


def test_diagonal_multicast_flagged():
    # A's flat line runs along (1, 1): a diagonal sharing wire
    arch = gen(GEMM4, ((1, 1, 0), (0, 1, 0), (1, 0, 1)), MNK, (8, 4))
    a_plan = arch.plans[0]
    assert a_plan.dataflow.kind is DataflowKind.MULTICAST
    assert a_plan.steps.flat[:2] == (1, 1)
    groups = [g for g in arch.multicast_groups if g.tensor == "A"]
    assert groups and all(g.diagonal for g in groups)


def test_nonadjacent_link_rejected():
    alg = parse_tensor_algebra(GEMM4)
    bad = SttMatrix(((1, 0, 0), (0, 2, 0), (1, 1, 1)), MNK)
    with pytest.raises(UnsupportedDesign):
        generate_arch(alg, bad, (8, 8))


# --- banks ---------------------------------------------------------------------


def test_output_stationary_gemm_bank_census():
    arch = gen(GEMM16, SKEW, MNK, (16, 16))
    kinds = Counter(b.kind for b in arch.banks)
    assert kinds == {"systolic_entry": 32, "stationary": 256}
    a_banks = [b for b in arch.banks if b.tensor == "A"]
    b_banks = [b for b in arch.banks if b.tensor == "B"]
    c_banks = [b for b in arch.banks if b.tensor == "C"]
    assert len(a_banks) == 16 and len(b_banks) == 16 and len(c_banks) == 256
    # A enters at column 0 of every row, B at row 0 of every column
    assert sorted(b.pes[0] for b in a_banks) == [(i, 0) for i in range(16)]
    assert sorted(b.pes[0] for b in b_banks) == [(0, j) for j in range(16)]


def test_bank_ids_unique():
    for rows in [SKEW, ((0, 1, 0), (0, 0, 1), (1, 1, 1)),
                 ((0, 0, 1), (0, 1, 0), (1, 0, 0))]:
        arch = gen(GEMM4, rows, MNK, (4, 4))
        ids = [b.id for b in arch.banks]
        assert len(ids) == len(set(ids))


# --- structural invariants ------------------------------------------------------


def all_designs_for(src, array, entries=(0, 1)):
    alg = parse_tensor_algebra(src)
    from sttgen.exactmat import det3

    for rows in itertools.product(
        itertools.product(entries, repeat=3), repeat=3
    ):
        if det3([list(r) for r in rows]) == 0:
            continue
        try:
            yield generate_arch(alg, SttMatrix(rows, MNK), array)
        except (UnsupportedDesign, ValueError):
            continue


def test_port_uniqueness_every_design():
    for arch in all_designs_for(GEMM4, (4, 4)):
        for p in arch.plans:
            incoming = Counter(
                l.dst for l in arch.links if l.tensor == p.name
            )
            assert all(v == 1 for v in incoming.values())
            group_of = Counter()
            for g in arch.multicast_groups:
                if g.tensor == p.name:
                    group_of.update(g.members)
            for t in arch.reduction_trees:
                if t.tensor == p.name:
                    group_of.update(t.members)
            assert all(v == 1 for v in group_of.values())


def test_chain_delay_is_hops_times_dt():
    for arch in all_designs_for(GEMM4, (4, 4)):
        for p in arch.plans:
            step = p.steps.systolic
            if step is None:
                continue
            nxt = {
                l.src: l for l in arch.links if l.tensor == p.name
            }
            entries = set(nxt) | {l.dst for l in arch.links if l.tensor == p.name}
            heads = [pe for pe in entries if pe not in {
                l.dst for l in arch.links if l.tensor == p.name
            }]
            for head in heads:
                total, hops, cur = 0, 0, head
                while cur in nxt:
                    total += nxt[cur].delay
                    hops += 1
                    cur = nxt[cur].dst
                assert total == hops * step[2]


def test_reduction_tree_leaves_partition_band():
    arch = gen(GEMM4, ((0, 0, 1), (0, 1, 0), (1, 0, 0)), MNK, (4, 4))
    trees = [t for t in arch.reduction_trees if t.tensor == "C"]
    leaves = [pe for t in trees for pe in t.members]
    assert len(leaves) == len(set(leaves))
    assert sorted(leaves) == sorted(arch.fp.band_pes(0))


def test_bank_stream_matrix_identity():
    # matrix_num = A_sel · adj(T) must satisfy matrix_num · T = den · A_sel
    for arch in all_designs_for(GEMM4, (4, 4)):
        t_rows = [list(r) for r in arch.transform.entries]
        for bank in arch.banks:
            num = [list(r) for r in bank.stream.matrix_num]
            base = [list(r) for r in bank.stream.sel_base]
            den = bank.stream.den
            got = [
                [
                    sum(num[r][k] * t_rows[k][c] for k in range(3))
                    for c in range(3)
                ]
                for r in range(len(num))
            ]
            want = [[den * v for v in row] for row in base]
            assert got == want


def test_bank_streams_reproduce_tile_demand():
    """Dual route: affine stream evaluation over the raw space-time image
    must regenerate exactly the index multiset the tile touches."""
    alg = parse_tensor_algebra("C[m,n] += A[m,k] * B[n,k]; m=4 n=6 k=5")
    for rows in [SKEW, ((0, 1, 0), (0, 0, 1), (1, 1, 1)),
                 ((0, 0, 1), (0, 1, 0), (1, 0, 0))]:
        arch = generate_arch(alg, SttMatrix(rows, MNK), (8, 8))
        t_rows = [list(r) for r in arch.transform.entries]
        sel_idx = [alg.iterator_index(n) for n in MNK]
        seq_names = [nm for nm, _, _ in arch.stages.sequential]
        for info in iter_stages(alg, arch.stages):
            seq_vals = [info.seq[nm] for nm in seq_names]
            for p in arch.plans:
                stream = next(
                    b.stream for b in arch.banks if b.tensor == p.name
                )
                direct, via_stream = [], []
                for u in itertools.product(*(range(e) for e in info.extents)):
                    x = [o + ui for o, ui in zip(info.origin, u)]
                    direct.append(tuple(
                        sum(p.a_sel[r][c] * x[c] for c in range(3))
                        + sum(
                            stream.seq[r][s] * seq_vals[s]
                            for s in range(len(seq_vals))
                        )
                        for r in range(p.access.rank)
                    ))
                    praw = [
                        sum(t_rows[i][j] * u[j] for j in range(3))
                        for i in range(3)
                    ]
                    idx = []
                    for r in range(p.access.rank):
                        numer = sum(
                            stream.matrix_num[r][c] * praw[c] for c in range(3)
                        )
                        assert numer % stream.den == 0
                        val = numer // stream.den
                        val += sum(
                            stream.sel_base[r][c] * info.origin[c]
                            for c in range(3)
                        )
                        val += sum(
                            stream.seq[r][s] * seq_vals[s]
                            for s in range(len(seq_vals))
                        )
                        idx.append(val)
                    via_stream.append(tuple(idx))
                assert Counter(direct) == Counter(via_stream)


# --- controller -----------------------------------------------------------------


def test_single_stage_exact_fit():
    arch = gen(GEMM16, SKEW, MNK, (16, 16))
    s = arch.stages
    assert s.count == 1
    assert (s.fill, s.span, s.drain) == (0, 46, 0)
    assert s.load_window == 0 and s.final_drain == 1
    infos = list(arch.stage_infos())
    assert len(infos) == 1
    assert infos[0].origin == (0, 0, 0) and infos[0].extents == (16, 16, 16)


def test_two_k_tiles_stationary_update():
    alg = parse_tensor_algebra("C[m,n] += A[m,k] * B[n,k]; m=4 n=4 k=8")
    arch = generate_arch(alg, SttMatrix(SKEW, MNK), (4, 4), time_budget=4)
    s = arch.stages
    assert s.count == 2
    assert s.stationary_update
    infos = list(arch.stage_infos())
    assert [i.origin for i in infos] == [(0, 0, 0), (0, 0, 4)]


def test_partial_tiles_cover_bounds():
    arch = gen("C[m,n] += A[m,k] * B[n,k]; m=6 n=6 k=6", SKEW, MNK, (4, 4))
    infos = list(arch.stage_infos())
    assert arch.stages.count == len(infos)
    covered = set()
    for info in infos:
        for u in itertools.product(*(range(e) for e in info.extents)):
            x = tuple(o + ui for o, ui in zip(info.origin, u))
            full = x + tuple(info.seq[nm] for nm, _, _ in arch.stages.sequential)
            assert full not in covered
            covered.add(full)
    assert len(covered) == 6 * 6 * 6


def test_conv_fold_stage_count_unaffected_by_fold_loop():
    # p occupies rows spatially; folding over k packs 5 copies, and the
    # k loop advances 5 values per stage instead of appearing 20 times
    src = "C[k,y,x] += A[c,y+p,x+q] * B[k,c,p,q]; k=20 c=2 y=16 x=16 p=3 q=3"
    arch = gen(src, ((0, 0, 1), (0, 1, 0), (1, 0, 0)), ("x", "y", "p"), (16, 16))
    assert arch.fp.fold == (5, 1)
    assert arch.stages.fold_loop == "k"
    seq = {nm: (bound, chunk) for nm, bound, chunk in arch.stages.sequential}
    assert seq["k"] == (20, 5)
    # stages: ceil(20/5) * c * q = 4 * 2 * 3
    assert arch.stages.count == 24


# --- serialization ---------------------------------------------------------------


def test_json_top_level_keys_exact():
    arch = gen(GEMM4, SKEW, MNK, (4, 4))
    doc = arch_to_json(arch)
    assert set(doc) == {
        "array", "pe_modules", "links", "multicast_groups",
        "reduction_trees", "banks", "stages", "compute_cell",
    }
    assert doc["compute_cell"] == {"operands": 2, "accumulate": True}


def test_json_round_trip_preserves_structures():
    for rows in [SKEW, ((0, 1, 0), (0, 0, 1), (1, 1, 1)),
                 ((0, 0, 1), (0, 1, 0), (1, 0, 0))]:
        arch = gen(GEMM4, rows, MNK, (4, 4))
        doc = json.loads(json.dumps(arch_to_json(arch)))
        back = arch_from_json(doc)
        assert back.array == arch.array
        assert back.links == arch.links
        assert back.multicast_groups == arch.multicast_groups
        assert back.reduction_trees == arch.reduction_trees
        assert back.banks == arch.banks
        assert back.stages == arch.stages
        assert back.pe_modules == arch.pe_modules
        assert [p.dataflow.kind for p in back.plans] == [
            p.dataflow.kind for p in arch.plans
        ]


def test_json_validates_against_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads(
        (Path(__file__).resolve().parents[1] / "docs" / "archspec.schema.json")
        .read_text()
    )
    for src, rows, sel, array in [
        (GEMM4, SKEW, MNK, (4, 4)),
        (GEMM16, SKEW, MNK, (16, 16)),
        ("C[k,y,x] += A[c,y+p,x+q] * B[k,c,p,q]; k=4 c=2 y=4 x=4 p=3 q=3",
         ((0, 0, 1), (0, 1, 0), (1, 0, 0)), ("x", "y", "p"), (16, 16)),
    ]:
        doc = json.loads(json.dumps(arch_to_json(gen(src, rows, sel, array))))
        jsonschema.validate(doc, schema)


def test_design_name_convention():
    alg = parse_tensor_algebra(GEMM16)
    analysis = analyze_design(alg, SttMatrix(SKEW, MNK))
    assert analysis.name == "MNK-SST"
