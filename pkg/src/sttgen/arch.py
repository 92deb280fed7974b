"""Architecture generation.

Turns per-tensor dataflow classifications into a complete, serializable
architecture description: per-PE module choices, PE-to-PE links, multicast
groups, reduction trees, memory banks with affine address streams, and a
stage schedule. The JSON form of ArchSpec is the contract between the
`generate` and `simulate` CLI verbs.

Geometry conventions: PE coordinates are (x, y) = (row, col). A tile of
the three selected loops is mapped through T; the raw image is shifted so
the minimum PE coordinate and stage-local time are zero. When the shifted
footprint is smaller than the array, fold copies ("bands") of the whole
structure are stacked along rows, then columns, each band running one
value of the fold loop.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field

from .algebra import TensorAccess, TensorAlgebra
from .exactmat import adjugate3, hnf_rows, matvec
from .stt import (
    DataflowKind,
    IORole,
    ReuseSpace,
    ReuseSubKind,
    SttMatrix,
    TensorDataflow,
    TileSpec,
    classify_dataflow,
    normalize_spacetime,
    restrict_access,
    reuse_space,
    spatial_extent,
)


class UnsupportedDesign(ValueError):
    """Legal STT whose hardware realization we refuse to build."""


class PeModuleKind(enum.Enum):
    SYSTOLIC_IN = "a"
    SYSTOLIC_OUT = "b"
    STATIONARY_IN = "c"
    STATIONARY_OUT = "d"
    PASS_IN = "e"
    PASS_OUT = "f"


_REUSE2D_MODULES = {
    (ReuseSubKind.BROADCAST, IORole.INPUT): (PeModuleKind.PASS_IN,),
    (ReuseSubKind.MULTICAST_STATIONARY, IORole.INPUT): (
        PeModuleKind.PASS_IN,
        PeModuleKind.STATIONARY_IN,
    ),
    (ReuseSubKind.SYSTOLIC_MULTICAST, IORole.INPUT): (
        PeModuleKind.PASS_IN,
        PeModuleKind.SYSTOLIC_IN,
    ),
    (ReuseSubKind.BROADCAST, IORole.OUTPUT): (PeModuleKind.PASS_OUT,),
    (ReuseSubKind.MULTICAST_STATIONARY, IORole.OUTPUT): (
        PeModuleKind.PASS_OUT,
        PeModuleKind.STATIONARY_OUT,
    ),
    (ReuseSubKind.SYSTOLIC_MULTICAST, IORole.OUTPUT): (
        PeModuleKind.PASS_OUT,
        PeModuleKind.SYSTOLIC_OUT,
    ),
}


def select_pe_module(df: TensorDataflow) -> tuple[PeModuleKind, ...]:
    """Module letters per Fig-3-style template table; Reuse2D yields a pair."""
    if df.kind is DataflowKind.MULTICAST and df.io_role is IORole.OUTPUT:
        raise ValueError("Multicast is an input-only dataflow")
    if df.kind is DataflowKind.REDUCTION_TREE and df.io_role is IORole.INPUT:
        raise ValueError("ReductionTree is an output-only dataflow")
    if df.kind is DataflowKind.REUSE2D:
        return _REUSE2D_MODULES[(df.sub_kind, df.io_role)]
    table = {
        (DataflowKind.SYSTOLIC, IORole.INPUT): PeModuleKind.SYSTOLIC_IN,
        (DataflowKind.SYSTOLIC, IORole.OUTPUT): PeModuleKind.SYSTOLIC_OUT,
        (DataflowKind.STATIONARY, IORole.INPUT): PeModuleKind.STATIONARY_IN,
        (DataflowKind.STATIONARY, IORole.OUTPUT): PeModuleKind.STATIONARY_OUT,
        (DataflowKind.MULTICAST, IORole.INPUT): PeModuleKind.PASS_IN,
        (DataflowKind.UNICAST, IORole.INPUT): PeModuleKind.PASS_IN,
        (DataflowKind.REDUCTION_TREE, IORole.OUTPUT): PeModuleKind.PASS_OUT,
        (DataflowKind.UNICAST, IORole.OUTPUT): PeModuleKind.PASS_OUT,
    }
    return (table[(df.kind, df.io_role)],)


@dataclass(frozen=True)
class HardwareSteps:
    """Realized space-time step vectors a tensor's hardware moves along.

    systolic: (dx, dy, dt) link step, dt >= 1, or None.
    flat: (dx, dy, 0) same-cycle sharing step (multicast/tree line), or None.
    """

    systolic: tuple[int, int, int] | None = None
    flat: tuple[int, int, int] | None = None


def _split_flat_and_moving(vectors) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """HNF-split a rank-2 space-time lattice into its dt=0 line + companion."""
    rows = hnf_rows([list(v) for v in vectors], col_order=(2, 0, 1))
    moving, flat = rows[0], rows[1]
    return normalize_spacetime(flat), normalize_spacetime(moving)


def hardware_steps(df: TensorDataflow, reuse: ReuseSpace) -> HardwareSteps:
    """Pick realized lattice steps for links/groups; reject non-adjacent links."""

    def check_link(v):
        if abs(v[0]) > 1 or abs(v[1]) > 1:
            raise UnsupportedDesign(
                f"systolic step {v} needs a non-adjacent link"
            )
        return v

    if df.kind is DataflowKind.SYSTOLIC:
        return HardwareSteps(systolic=check_link(reuse.realized_basis[0]))
    if df.kind in (DataflowKind.MULTICAST, DataflowKind.REDUCTION_TREE):
        return HardwareSteps(flat=reuse.realized_basis[0])
    if df.kind is DataflowKind.STATIONARY:
        return HardwareSteps()
    if df.kind is DataflowKind.REUSE2D and reuse.dimension == 2:
        if df.sub_kind is ReuseSubKind.BROADCAST:
            return HardwareSteps()
        flat, moving = _split_flat_and_moving(reuse.realized_basis)
        if df.sub_kind is ReuseSubKind.MULTICAST_STATIONARY:
            return HardwareSteps(flat=flat)
        return HardwareSteps(systolic=check_link(moving), flat=flat)
    return HardwareSteps()  # Unicast, or degenerate dim-3 broadcast


@dataclass(frozen=True)
class TensorPlan:
    """Everything arch-gen needs to know about one tensor."""

    name: str
    io_role: IORole
    access: TensorAccess
    a_sel: tuple[tuple[int, int, int], ...]
    reuse: ReuseSpace
    dataflow: TensorDataflow
    steps: HardwareSteps
    modules: tuple[PeModuleKind, ...]


@dataclass(frozen=True)
class DesignAnalysis:
    algebra: TensorAlgebra
    transform: SttMatrix
    plans: tuple[TensorPlan, ...]  # inputs in statement order, output last

    @property
    def name(self) -> str:
        sel = "".join(self.transform.selected_iterators).upper()
        letters = "".join(p.dataflow.letter for p in self.plans)
        return f"{sel}-{letters}"


def analyze_design(algebra: TensorAlgebra, transform: SttMatrix) -> DesignAnalysis:
    """Classify every tensor of the algebra under one transformation."""
    plans = []
    for acc, role in [(a, IORole.INPUT) for a in algebra.inputs] + [
        (algebra.output, IORole.OUTPUT)
    ]:
        a_sel = restrict_access(acc, algebra, transform.selected_iterators)
        reuse = reuse_space(a_sel, transform)
        df = classify_dataflow(reuse, role)
        plans.append(
            TensorPlan(
                name=acc.tensor_name,
                io_role=role,
                access=acc,
                a_sel=a_sel,
                reuse=reuse,
                dataflow=df,
                steps=hardware_steps(df, reuse),
                modules=select_pe_module(df),
            )
        )
    return DesignAnalysis(algebra, transform, tuple(plans))


# --- geometry --------------------------------------------------------------


@dataclass(frozen=True)
class Footprint:
    """Shifted image of the full tile box under T, plus fold placement."""

    rows_used: int
    cols_used: int
    span: int
    p_shift: tuple[int, int]
    t_shift: int
    fold: tuple[int, int]

    @property
    def bands(self) -> int:
        return self.fold[0] * self.fold[1]

    def band_origin(self, b: int) -> tuple[int, int]:
        br, bc = divmod(b, self.fold[1])
        return br * self.rows_used, bc * self.cols_used

    def band_pes(self, b: int) -> list[tuple[int, int]]:
        ox, oy = self.band_origin(b)
        return [
            (ox + i, oy + j)
            for i in range(self.rows_used)
            for j in range(self.cols_used)
        ]


def footprint(transform: SttMatrix, tile: tuple[int, int, int],
              fold: tuple[int, int] = (1, 1)) -> Footprint:
    (rlo, rhi), (clo, chi) = spatial_extent(transform, tile)
    tlo = sum(min(0, transform.entries[2][j]) * (tile[j] - 1) for j in range(3))
    thi = sum(max(0, transform.entries[2][j]) * (tile[j] - 1) for j in range(3))
    return Footprint(
        rows_used=rhi - rlo + 1,
        cols_used=chi - clo + 1,
        span=thi - tlo + 1,
        p_shift=(-rlo, -clo),
        t_shift=-tlo,
        fold=fold,
    )


def entry_hops(q: tuple[int, int], step: tuple[int, int, int],
               fp: Footprint) -> int:
    """Hops from the chain entry to shifted in-band position q along step."""
    dists = []
    if step[0] > 0:
        dists.append(q[0] // step[0])
    elif step[0] < 0:
        dists.append((fp.rows_used - 1 - q[0]) // -step[0])
    if step[1] > 0:
        dists.append(q[1] // step[1])
    elif step[1] < 0:
        dists.append((fp.cols_used - 1 - q[1]) // -step[1])
    return min(dists) if dists else 0


def exit_hops(q: tuple[int, int], step: tuple[int, int, int],
              fp: Footprint) -> int:
    """Hops forward from q to the last in-band position along step."""
    return entry_hops(q, (-step[0], -step[1], step[2]), fp)


def line_of(q: tuple[int, int], step: tuple[int, int, int],
            fp: Footprint) -> list[tuple[int, int]]:
    """All shifted in-band positions on q's line along step, entry first."""
    k = entry_hops(q, step, fp)
    start = (q[0] - k * step[0], q[1] - k * step[1])
    out = [start]
    while True:
        nxt = (out[-1][0] + step[0], out[-1][1] + step[1])
        if not (0 <= nxt[0] < fp.rows_used and 0 <= nxt[1] < fp.cols_used):
            return out
        out.append(nxt)


# --- IR node types ----------------------------------------------------------


@dataclass(frozen=True)
class Link:
    tensor: str
    src: tuple[int, int]
    dst: tuple[int, int]
    delay: int


@dataclass(frozen=True)
class MulticastGroup:
    tensor: str
    bank: str
    members: tuple[tuple[int, int], ...]
    diagonal: bool


@dataclass(frozen=True)
class ReductionTree:
    tensor: str
    bank: str
    members: tuple[tuple[int, int], ...]  # leaf order is summation order
    arity: int = 2

    @property
    def depth(self) -> int:
        n = len(self.members)
        return max(1, (n - 1).bit_length()) if n > 1 else 0


@dataclass(frozen=True)
class AddressStream:
    """index(stage, tau) = (matrix_num/den)·(x, y, t_raw) + sel_base·origin
    + seq·(sequential values); spatial part fixed for entry-pinned banks."""

    matrix_num: tuple[tuple[int, ...], ...]  # access · adj(T)
    den: int  # det(T)
    sel_base: tuple[tuple[int, ...], ...]  # access over selected iterators
    seq: tuple[tuple[int, ...], ...]  # access over sequential iterators
    spatial: tuple[int, int] | None  # raw (unshifted) coords, None = per-PE


@dataclass(frozen=True)
class Bank:
    tensor: str
    id: str
    kind: str  # systolic_entry|multicast|broadcast|unicast|stationary|tree_root
    band: int
    pes: tuple[tuple[int, int], ...]
    stream: AddressStream


@dataclass(frozen=True)
class StageSchedule:
    """Compact generator for the stage sequence plus its cycle budget.

    sequential: (name, bound, chunk) per unselected loop, declaration
    order, outermost first; chunk > 1 only for the fold loop. Tile
    indices for the three selected loops nest inside, last fastest.
    """

    count: int
    fill: int
    span: int
    drain: int
    load_window: int
    final_drain: int
    stationary_update: bool
    sequential: tuple[tuple[str, int, int], ...]
    selection: tuple[str, str, str]
    tile: tuple[int, int, int]
    counts: tuple[int, int, int]
    fold_loop: str | None

    @property
    def cycles_per_stage(self) -> int:
        return self.fill + self.span + self.drain


@dataclass(frozen=True)
class StageInfo:
    index: int
    seq: dict  # sequential loop -> value (fold loop: base value of the band run)
    origin: tuple[int, int, int]
    extents: tuple[int, int, int]


@dataclass(frozen=True)
class ArchSpec:
    array: tuple[int, int]
    algebra: TensorAlgebra
    transform: SttMatrix
    fp: Footprint
    pe_modules: dict  # tensor -> tuple of module letters
    links: tuple[Link, ...]
    multicast_groups: tuple[MulticastGroup, ...]
    reduction_trees: tuple[ReductionTree, ...]
    banks: tuple[Bank, ...]
    stages: StageSchedule
    compute_cell: dict  # {"operands": n, "accumulate": True}
    plans: tuple[TensorPlan, ...] = field(repr=False, default=())

    def stage_infos(self):
        return iter_stages(self.algebra, self.stages)


def iter_stages(algebra: TensorAlgebra, sched: StageSchedule):
    """Deterministic odometer over sequential chunks and tile indices."""
    bounds = dict(algebra.iterators)
    seq_ranges = [
        range(0, bound, chunk) for _, bound, chunk in sched.sequential
    ]
    tile_ranges = [range(c) for c in sched.counts]
    names = [nm for nm, _, _ in sched.sequential]
    idx = 0
    for combo in itertools.product(*seq_ranges, *tile_ranges):
        seq_vals = dict(zip(names, combo[: len(names)]))
        g = combo[len(names):]
        origin = tuple(gi * s for gi, s in zip(g, sched.tile))
        extents = tuple(
            min(s, bounds[nm] - o)
            for nm, s, o in zip(sched.selection, sched.tile, origin)
        )
        yield StageInfo(idx, seq_vals, origin, extents)
        idx += 1


# --- structure builders ------------------------------------------------------


def build_interconnect(
    plans, array_dims: tuple[int, int], fp: Footprint
) -> tuple[tuple[Link, ...], tuple[MulticastGroup, ...], tuple[ReductionTree, ...]]:
    """Links, multicast groups, and reduction trees for every band."""
    links: list[Link] = []
    groups: list[MulticastGroup] = []
    trees: list[ReductionTree] = []
    for plan in plans:
        st = plan.steps
        if st.systolic is not None:
            dx, dy, dt = st.systolic
            for b in range(fp.bands):
                ox, oy = fp.band_origin(b)
                for i in range(fp.rows_used):
                    for j in range(fp.cols_used):
                        ti, tj = i + dx, j + dy
                        if 0 <= ti < fp.rows_used and 0 <= tj < fp.cols_used:
                            links.append(
                                Link(
                                    plan.name,
                                    (ox + i, oy + j),
                                    (ox + ti, oy + tj),
                                    dt,
                                )
                            )
        flat = st.flat
        needs_lines = (
            plan.dataflow.kind in (DataflowKind.MULTICAST, DataflowKind.REDUCTION_TREE)
            or plan.dataflow.sub_kind is ReuseSubKind.MULTICAST_STATIONARY
        )
        if flat is not None and needs_lines:
            for b in range(fp.bands):
                ox, oy = fp.band_origin(b)
                seen = set()
                for i in range(fp.rows_used):
                    for j in range(fp.cols_used):
                        line = tuple(line_of((i, j), flat, fp))
                        if line[0] in seen:
                            continue
                        seen.add(line[0])
                        members = tuple((ox + x, oy + y) for x, y in line)
                        bank_id = _bank_id(plan.name, "line", b, line[0])
                        if plan.io_role is IORole.INPUT:
                            groups.append(
                                MulticastGroup(
                                    plan.name,
                                    bank_id,
                                    members,
                                    diagonal=flat[0] != 0 and flat[1] != 0,
                                )
                            )
                        else:
                            trees.append(ReductionTree(plan.name, bank_id, members))
        if plan.dataflow.sub_kind is ReuseSubKind.SYSTOLIC_MULTICAST:
            # sharing lines exist only where values enter/exit the chains;
            # a line keeps just its boundary positions (interior PEs get
            # the value through their own chain)
            sysstep = st.systolic

            def on_boundary(pos):
                if plan.io_role is IORole.INPUT:
                    return entry_hops(pos, sysstep, fp) == 0
                return exit_hops(pos, sysstep, fp) == 0

            for b in range(fp.bands):
                ox, oy = fp.band_origin(b)
                seen = set()
                for i in range(fp.rows_used):
                    for j in range(fp.cols_used):
                        if not on_boundary((i, j)):
                            continue
                        line = [
                            pos for pos in line_of((i, j), flat, fp)
                            if on_boundary(pos)
                        ]
                        if line[0] in seen:
                            continue
                        seen.add(line[0])
                        members = tuple((ox + x, oy + y) for x, y in line)
                        bank_id = _bank_id(plan.name, "line", b, line[0])
                        if plan.io_role is IORole.INPUT:
                            groups.append(
                                MulticastGroup(
                                    plan.name, bank_id, members,
                                    diagonal=flat[0] != 0 and flat[1] != 0,
                                )
                            )
                        else:
                            trees.append(ReductionTree(plan.name, bank_id, members))
        if plan.dataflow.kind is DataflowKind.REUSE2D and (
            plan.dataflow.sub_kind is ReuseSubKind.BROADCAST
        ):
            for b in range(fp.bands):
                members = tuple(fp.band_pes(b))
                bank_id = _bank_id(plan.name, "all", b, (0, 0))
                if plan.io_role is IORole.INPUT:
                    groups.append(MulticastGroup(plan.name, bank_id, members, False))
                else:
                    trees.append(ReductionTree(plan.name, bank_id, members))
    return tuple(links), tuple(groups), tuple(trees)


def _bank_id(tensor: str, tag: str, band: int, pos: tuple[int, int]) -> str:
    return f"{tensor}.{tag}.b{band}.{pos[0]}_{pos[1]}"


def _stream_for(plan: TensorPlan, transform: SttMatrix,
                algebra: TensorAlgebra,
                spatial: tuple[int, int] | None) -> AddressStream:
    adj = adjugate3([list(r) for r in transform.entries])
    a_sel = [list(r) for r in plan.a_sel]
    num = tuple(
        tuple(sum(a_sel[r][k] * adj[k][c] for k in range(3)) for c in range(3))
        for r in range(plan.access.rank)
    )
    sel_cols = [algebra.iterator_index(n) for n in transform.selected_iterators]
    seq_cols = [
        i for i in range(len(algebra.iterators)) if i not in sel_cols
    ]
    seq = tuple(
        tuple(row[c] for c in seq_cols) for row in plan.access.access_matrix
    )
    return AddressStream(
        matrix_num=num,
        den=transform.det,
        sel_base=plan.a_sel,
        seq=seq,
        spatial=spatial,
    )


def assign_banks(
    plans, transform: SttMatrix, algebra: TensorAlgebra, fp: Footprint,
    links, groups, trees,
) -> tuple[Bank, ...]:
    """One bank per injection point, sharing group, tree root, or PE."""
    banks: list[Bank] = []

    def add(plan, kind, band, pes, spatial, tag, pos):
        banks.append(
            Bank(
                tensor=plan.name,
                id=_bank_id(plan.name, tag, band, pos),
                kind=kind,
                band=band,
                pes=tuple(pes),
                stream=_stream_for(plan, transform, algebra, spatial),
            )
        )

    for plan in plans:
        kind = plan.dataflow.kind
        sub = plan.dataflow.sub_kind
        if kind in (DataflowKind.UNICAST, DataflowKind.STATIONARY):
            bkind = (
                "stationary" if kind is DataflowKind.STATIONARY else "unicast"
            )
            for b in range(fp.bands):
                ox, oy = fp.band_origin(b)
                for i in range(fp.rows_used):
                    for j in range(fp.cols_used):
                        raw = (i - fp.p_shift[0], j - fp.p_shift[1])
                        add(
                            plan, bkind, b, [(ox + i, oy + j)],
                            raw, "pe", (i, j),
                        )
        elif kind is DataflowKind.SYSTOLIC:
            # line banks of a SystolicMulticast pair come from groups/trees
            step = plan.steps.systolic
            for b in range(fp.bands):
                ox, oy = fp.band_origin(b)
                for i in range(fp.rows_used):
                    for j in range(fp.cols_used):
                        boundary = (
                            entry_hops((i, j), step, fp) == 0
                            if plan.io_role is IORole.INPUT
                            else exit_hops((i, j), step, fp) == 0
                        )
                        if boundary:
                            raw = (i - fp.p_shift[0], j - fp.p_shift[1])
                            add(
                                plan,
                                "systolic_entry"
                                if plan.io_role is IORole.INPUT
                                else "systolic_exit",
                                b, [(ox + i, oy + j)], raw, "edge", (i, j),
                            )
        # line banks for groups/trees that belong to this tensor
        band_size = fp.rows_used * fp.cols_used
        for g in groups:
            if g.tensor == plan.name:
                b = _band_of(g.members[0], fp)
                head = g.members[0]
                ox, oy = fp.band_origin(b)
                raw = (head[0] - ox - fp.p_shift[0], head[1] - oy - fp.p_shift[1])
                banks.append(
                    Bank(
                        tensor=plan.name,
                        id=g.bank,
                        kind="broadcast"
                        if len(g.members) == band_size
                        else "multicast",
                        band=b,
                        pes=g.members,
                        stream=_stream_for(plan, transform, algebra, raw),
                    )
                )
        for t in trees:
            if t.tensor == plan.name:
                b = _band_of(t.members[0], fp)
                head = t.members[0]
                ox, oy = fp.band_origin(b)
                raw = (head[0] - ox - fp.p_shift[0], head[1] - oy - fp.p_shift[1])
                banks.append(
                    Bank(
                        tensor=plan.name,
                        id=t.bank,
                        kind="tree_root",
                        band=b,
                        pes=t.members,
                        stream=_stream_for(plan, transform, algebra, raw),
                    )
                )
    seen = set()
    out = []
    for bank in banks:
        if bank.id in seen:
            continue
        seen.add(bank.id)
        out.append(bank)
    return tuple(out)


def _band_of(pe: tuple[int, int], fp: Footprint) -> int:
    br = pe[0] // fp.rows_used
    bc = pe[1] // fp.cols_used
    return br * fp.fold[1] + bc


# --- controller ---------------------------------------------------------------


def _tile_images(transform: SttMatrix, tile: tuple[int, int, int], fp: Footprint):
    """(shifted q, tau) for every cell of the full tile box."""
    t_rows = [list(r) for r in transform.entries]
    for u in itertools.product(*(range(s) for s in tile)):
        img = matvec(t_rows, u)
        yield (
            (img[0] + fp.p_shift[0], img[1] + fp.p_shift[1]),
            img[2] + fp.t_shift,
        )


def build_controller(
    algebra: TensorAlgebra,
    tiling: TileSpec,
    transform: SttMatrix,
    plans,
    fp: Footprint,
) -> StageSchedule:
    """Stage count and per-stage cycle budget from the full tile geometry."""
    bounds = dict(algebra.iterators)
    fold_factor = fp.bands
    sequential = tuple(
        (
            nm,
            bounds[nm],
            fold_factor if nm == tiling.fold_loop else 1,
        )
        for nm in tiling.sequential
    )
    count = 1
    for nm, bound, chunk in sequential:
        count *= -(-bound // chunk)
    for c in tiling.counts:
        count *= c

    fill = 0
    drain = 0
    cells = list(_tile_images(transform, tiling.tile, fp))
    for plan in plans:
        step = plan.steps.systolic
        if step is None:
            continue
        # inputs must be injected early enough; output chains start from a
        # zero slot that leaves the boundary equally early, so both roles
        # contribute to the fill margin and neither stage bleeds into the next
        lead = max(entry_hops(q, step, fp) * step[2] - tau for q, tau in cells)
        fill = max(fill, lead)
        if plan.io_role is IORole.OUTPUT:
            lag = max(
                tau + exit_hops(q, step, fp) * step[2] - (fp.span - 1)
                for q, tau in cells
            )
            drain = max(drain, lag)

    stationary_in = any(
        PeModuleKind.STATIONARY_IN in p.modules for p in plans
    )
    stationary_out = any(
        PeModuleKind.STATIONARY_OUT in p.modules for p in plans
    )
    return StageSchedule(
        count=count,
        fill=fill,
        span=fp.span,
        drain=drain,
        load_window=1 if stationary_in else 0,
        final_drain=1 if stationary_out else 0,
        stationary_update=stationary_in or stationary_out,
        sequential=sequential,
        selection=tiling.selection,
        tile=tiling.tile,
        counts=tiling.counts,
        fold_loop=tiling.fold_loop,
    )


# --- top-level driver ----------------------------------------------------------


def generate_arch(
    algebra: TensorAlgebra,
    transform: SttMatrix,
    array_dims: tuple[int, int],
    tiling: TileSpec | None = None,
    time_budget: int | None = None,
) -> ArchSpec:
    from .stt import select_loops_and_tile, validate_stt

    verdict = validate_stt(transform)
    if not verdict.legal:
        raise ValueError(f"singular transformation (det = {verdict.det})")
    analysis = analyze_design(algebra, transform)
    if tiling is None:
        tiling = select_loops_and_tile(
            algebra,
            transform.selected_iterators,
            array_dims,
            time_budget=time_budget,
            transform=transform,
        )
    fp = footprint(transform, tiling.tile, tiling.fold)
    if (
        fp.rows_used * fp.fold[0] > array_dims[0]
        or fp.cols_used * fp.fold[1] > array_dims[1]
    ):
        raise ValueError("tile footprint exceeds the array")
    links, groups, trees = build_interconnect(analysis.plans, array_dims, fp)
    banks = assign_banks(
        analysis.plans, transform, algebra, fp, links, groups, trees
    )
    stages = build_controller(algebra, tiling, transform, analysis.plans, fp)
    return ArchSpec(
        array=array_dims,
        algebra=algebra,
        transform=transform,
        fp=fp,
        pe_modules={
            p.name: tuple(m.value for m in p.modules) for p in analysis.plans
        },
        links=links,
        multicast_groups=groups,
        reduction_trees=trees,
        banks=banks,
        stages=stages,
        compute_cell={"operands": len(algebra.inputs), "accumulate": True},
        plans=analysis.plans,
    )


# --- JSON serialization ----------------------------------------------------------


def arch_to_json(arch: ArchSpec) -> dict:
    a = arch.algebra
    return {
        "array": {"rows": arch.array[0], "cols": arch.array[1]},
        "pe_modules": {t: list(ms) for t, ms in arch.pe_modules.items()},
        "links": [
            {
                "tensor": l.tensor,
                "src": list(l.src),
                "dst": list(l.dst),
                "delay": l.delay,
            }
            for l in arch.links
        ],
        "multicast_groups": [
            {
                "tensor": g.tensor,
                "bank": g.bank,
                "members": [list(m) for m in g.members],
                "diagonal": g.diagonal,
            }
            for g in arch.multicast_groups
        ],
        "reduction_trees": [
            {
                "tensor": t.tensor,
                "bank": t.bank,
                "members": [list(m) for m in t.members],
                "arity": t.arity,
            }
            for t in arch.reduction_trees
        ],
        "banks": [
            {
                "tensor": b.tensor,
                "id": b.id,
                "kind": b.kind,
                "band": b.band,
                "pes": [list(p) for p in b.pes],
                "address_stream": {
                    "matrix_num": [list(r) for r in b.stream.matrix_num],
                    "den": b.stream.den,
                    "sel_base": [list(r) for r in b.stream.sel_base],
                    "seq": [list(r) for r in b.stream.seq],
                    "spatial": list(b.stream.spatial)
                    if b.stream.spatial is not None
                    else None,
                },
            }
            for b in arch.banks
        ],
        "stages": {
            "count": arch.stages.count,
            "fill": arch.stages.fill,
            "span": arch.stages.span,
            "drain": arch.stages.drain,
            "cycles_per_stage": arch.stages.cycles_per_stage,
            "load_window": arch.stages.load_window,
            "final_drain": arch.stages.final_drain,
            "stationary_update": arch.stages.stationary_update,
            "sequential": [list(s) for s in arch.stages.sequential],
            "selection": list(arch.stages.selection),
            "tile": list(arch.stages.tile),
            "counts": list(arch.stages.counts),
            "fold_loop": arch.stages.fold_loop,
            "schedule": {
                "algebra": a.pretty(),
                "name": a.name,
                "selection": list(arch.transform.selected_iterators),
                "transform": [list(r) for r in arch.transform.entries],
                "fold": list(arch.fp.fold),
                "rows_used": arch.fp.rows_used,
                "cols_used": arch.fp.cols_used,
                "p_shift": list(arch.fp.p_shift),
                "t_shift": arch.fp.t_shift,
            },
        },
        "compute_cell": dict(arch.compute_cell),
    }


def arch_from_json(doc: dict) -> ArchSpec:
    from .algebra import parse_tensor_algebra

    sched = doc["stages"]["schedule"]
    algebra = parse_tensor_algebra(sched["algebra"], name=sched["name"])
    transform = SttMatrix(
        tuple(tuple(r) for r in sched["transform"]),
        tuple(sched["selection"]),
    )
    fp = Footprint(
        rows_used=sched["rows_used"],
        cols_used=sched["cols_used"],
        span=doc["stages"]["span"],
        p_shift=tuple(sched["p_shift"]),
        t_shift=sched["t_shift"],
        fold=tuple(sched["fold"]),
    )
    stages = StageSchedule(
        count=doc["stages"]["count"],
        fill=doc["stages"]["fill"],
        span=doc["stages"]["span"],
        drain=doc["stages"]["drain"],
        load_window=doc["stages"]["load_window"],
        final_drain=doc["stages"]["final_drain"],
        stationary_update=doc["stages"]["stationary_update"],
        sequential=tuple((s[0], s[1], s[2]) for s in doc["stages"]["sequential"]),
        selection=tuple(doc["stages"]["selection"]),
        tile=tuple(doc["stages"]["tile"]),
        counts=tuple(doc["stages"]["counts"]),
        fold_loop=doc["stages"]["fold_loop"],
    )
    banks = tuple(
        Bank(
            tensor=b["tensor"],
            id=b["id"],
            kind=b["kind"],
            band=b["band"],
            pes=tuple(tuple(p) for p in b["pes"]),
            stream=AddressStream(
                matrix_num=tuple(tuple(r) for r in b["address_stream"]["matrix_num"]),
                den=b["address_stream"]["den"],
                sel_base=tuple(tuple(r) for r in b["address_stream"]["sel_base"]),
                seq=tuple(tuple(r) for r in b["address_stream"]["seq"]),
                spatial=tuple(b["address_stream"]["spatial"])
                if b["address_stream"]["spatial"] is not None
                else None,
            ),
        )
        for b in doc["banks"]
    )
    analysis = analyze_design(algebra, transform)
    return ArchSpec(
        array=(doc["array"]["rows"], doc["array"]["cols"]),
        algebra=algebra,
        transform=transform,
        fp=fp,
        pe_modules={t: tuple(ms) for t, ms in doc["pe_modules"].items()},
        links=tuple(
            Link(l["tensor"], tuple(l["src"]), tuple(l["dst"]), l["delay"])
            for l in doc["links"]
        ),
        multicast_groups=tuple(
            MulticastGroup(
                g["tensor"],
                g["bank"],
                tuple(tuple(m) for m in g["members"]),
                g["diagonal"],
            )
            for g in doc["multicast_groups"]
        ),
        reduction_trees=tuple(
            ReductionTree(
                t["tensor"],
                t["bank"],
                tuple(tuple(m) for m in t["members"]),
                t["arity"],
            )
            for t in doc["reduction_trees"]
        ),
        banks=banks,
        stages=stages,
        compute_cell=dict(doc["compute_cell"]),
        plans=analysis.plans,
    )


def save_arch(arch: ArchSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(arch_to_json(arch), f, indent=1)
        f.write("\n")


def load_arch(path) -> ArchSpec:
    with open(path, encoding="utf-8") as f:
        return arch_from_json(json.load(f))
