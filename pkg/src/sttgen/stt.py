"""Space-time transformation analysis.

A 3x3 integer matrix T maps three selected loop iterators to two PE
coordinates plus a cycle index. For each tensor, the kernel of A·T⁻¹
(A restricted to the selected iterators) gives the directions along
which consecutive space-time points touch the same element; the kernel
dimension and the (dp, dt) split of its basis decide the dataflow.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .algebra import TensorAccess, TensorAlgebra
from .exactmat import (
    Vec,
    det3,
    hnf_rows,
    integer_kernel_basis,
    inverse3,
    matmul,
    matvec,
    primitive,
    rational_rank,
)


class DataflowKind(enum.Enum):
    UNICAST = "Unicast"
    STATIONARY = "Stationary"
    SYSTOLIC = "Systolic"
    MULTICAST = "Multicast"
    REDUCTION_TREE = "ReductionTree"
    REUSE2D = "Reuse2D"


class ReuseSubKind(enum.Enum):
    BROADCAST = "Broadcast"
    MULTICAST_STATIONARY = "MulticastStationary"
    SYSTOLIC_MULTICAST = "SystolicMulticast"


class IORole(enum.Enum):
    INPUT = "Input"
    OUTPUT = "Output"


# single-letter dataflow tags used in design-point names
KIND_LETTER = {
    DataflowKind.SYSTOLIC: "S",
    DataflowKind.STATIONARY: "T",
    DataflowKind.MULTICAST: "M",
    DataflowKind.REDUCTION_TREE: "M",
    DataflowKind.UNICAST: "U",
    DataflowKind.REUSE2D: "B",
}


@dataclass(frozen=True)
class SttMatrix:
    """Transformation entries plus the iterator triple it applies to.

    Legality (nonzero determinant) is checked by validate_stt, not at
    construction, so illegal candidates can be represented and reported.
    """

    entries: tuple[tuple[int, int, int], ...]
    selected_iterators: tuple[str, str, str]

    def __post_init__(self):
        if len(self.entries) != 3 or any(len(r) != 3 for r in self.entries):
            raise ValueError("entries must be 3x3")
        if len(set(self.selected_iterators)) != 3:
            raise ValueError("selected iterators must be three distinct names")

    @property
    def det(self) -> int:
        return det3([list(r) for r in self.entries])

    def inverse(self) -> list[list[Fraction]]:
        return inverse3([list(r) for r in self.entries])


@dataclass(frozen=True)
class SttVerdict:
    legal: bool
    det: int


@dataclass(frozen=True)
class SpaceTimePoint:
    p: tuple[int, int]
    t: int


@dataclass(frozen=True)
class ReuseSpace:
    """Reuse directions of one tensor under one transformation.

    basis: primitive space-time vectors (dp_x, dp_y, dt) spanning
        ker(A·T⁻¹), sign-normalized so dt > 0, or dt = 0 and the first
        nonzero spatial entry > 0.
    iter_basis: saturated integer basis of ker(A) in iteration space.
    realized_basis: T·iter_basis — the space-time steps that actually
        occur between lattice iterations. Equal to basis up to scale;
        the scale exceeds 1 only when |det T| > 1.
    """

    dimension: int
    basis: tuple[Vec, ...]
    iter_basis: tuple[Vec, ...]
    realized_basis: tuple[Vec, ...]


@dataclass(frozen=True)
class TensorDataflow:
    kind: DataflowKind
    io_role: IORole
    sub_kind: ReuseSubKind | None = None
    direction: tuple[Vec, ...] | None = None
    warning: str | None = None

    @property
    def letter(self) -> str:
        return KIND_LETTER[self.kind]


def validate_stt(T: SttMatrix) -> SttVerdict:
    d = T.det
    return SttVerdict(legal=d != 0, det=d)


def space_time_map(T: SttMatrix, x: tuple[int, int, int]) -> SpaceTimePoint:
    img = matvec([list(r) for r in T.entries], x)
    return SpaceTimePoint(p=(img[0], img[1]), t=img[2])


def restrict_access(
    acc: TensorAccess, algebra: TensorAlgebra, selection: tuple[str, str, str]
) -> tuple[tuple[int, int, int], ...]:
    """Drop access-matrix columns of unselected (sequential) iterators."""
    cols = [algebra.iterator_index(nm) for nm in selection]
    return tuple(tuple(row[c] for c in cols) for row in acc.access_matrix)


def normalize_spacetime(v: Vec) -> Vec:
    """Flip sign so dt > 0, or dt = 0 and first nonzero spatial entry > 0."""
    if v[2] != 0:
        return v if v[2] > 0 else tuple(-x for x in v)
    for x in v[:2]:
        if x != 0:
            return v if x > 0 else tuple(-x for x in v)
    return v


def reuse_space(a_sel, T: SttMatrix) -> ReuseSpace:
    """Exact kernel of A·T⁻¹ plus its realization on the iteration lattice."""
    a_rows = [list(r) for r in a_sel]
    iter_basis = integer_kernel_basis(a_rows)
    if a_rows:
        m = matmul(a_rows, T.inverse())
        ker = integer_kernel_basis(m)
    else:
        ker = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
        iter_basis = list(ker)
    basis = hnf_rows([primitive(v) for v in ker])
    basis = tuple(normalize_spacetime(v) for v in basis)
    t_rows = [list(r) for r in T.entries]
    realized = tuple(normalize_spacetime(matvec(t_rows, n)) for n in iter_basis)
    return ReuseSpace(
        dimension=len(basis),
        basis=basis,
        iter_basis=tuple(iter_basis),
        realized_basis=realized,
    )


def _in_span(v: Vec, basis: tuple[Vec, ...]) -> bool:
    rows = [list(b) for b in basis]
    return rational_rank(rows + [list(v)]) == rational_rank(rows)


def classify_dataflow(reuse: ReuseSpace, io_role: IORole) -> TensorDataflow:
    """Table-driven mapping from reuse dimension and (dp, dt) to a dataflow."""
    dim = reuse.dimension
    if dim == 0:
        return TensorDataflow(DataflowKind.UNICAST, io_role)
    if dim == 1:
        v = reuse.basis[0]
        dp_zero = v[0] == 0 and v[1] == 0
        if dp_zero:
            return TensorDataflow(DataflowKind.STATIONARY, io_role, direction=(v,))
        if v[2] != 0:
            return TensorDataflow(DataflowKind.SYSTOLIC, io_role, direction=(v,))
        kind = (
            DataflowKind.MULTICAST
            if io_role is IORole.INPUT
            else DataflowKind.REDUCTION_TREE
        )
        return TensorDataflow(kind, io_role, direction=(v,))

    warning = None
    if dim == 3:
        warning = (
            "reuse spans all three selected loops; treating as Broadcast "
            "(tensor is constant over the selected loops)"
        )
        direction = ((1, 0, 0), (0, 1, 0))
        return TensorDataflow(
            DataflowKind.REUSE2D, io_role, ReuseSubKind.BROADCAST, direction, warning
        )

    if all(v[2] == 0 for v in reuse.basis):
        return TensorDataflow(
            DataflowKind.REUSE2D, io_role, ReuseSubKind.BROADCAST, reuse.basis
        )
    # split the plane into its dt = 0 line plus one time-moving companion
    rows = hnf_rows([list(v) for v in reuse.basis], col_order=(2, 0, 1))
    companion, flat = rows[0], rows[1]
    flat = normalize_spacetime(primitive(flat))
    companion = normalize_spacetime(primitive(companion))
    if _in_span((0, 0, 1), reuse.basis):
        return TensorDataflow(
            DataflowKind.REUSE2D,
            io_role,
            ReuseSubKind.MULTICAST_STATIONARY,
            (flat, (0, 0, 1)),
        )
    return TensorDataflow(
        DataflowKind.REUSE2D,
        io_role,
        ReuseSubKind.SYSTOLIC_MULTICAST,
        (flat, companion),
    )


@dataclass(frozen=True)
class TileSpec:
    """Tile shape for the selected loops plus fold placement of copies.

    tile: per-selected-loop tile sizes; boundary tiles may be partial.
    counts: number of tiles per selected loop (ceiling division).
    sequential: unselected iterators, declaration order (outer loops).
    fold: copies of the tile footprint stacked along (rows, cols) when
        the footprint is smaller than the array; each copy runs one value
        of fold_loop, so fold (1,1) means no replication.
    """

    selection: tuple[str, str, str]
    tile: tuple[int, int, int]
    counts: tuple[int, int, int]
    sequential: tuple[str, ...]
    fold: tuple[int, int] = (1, 1)
    fold_loop: str | None = None
    warnings: tuple[str, ...] = ()

    @property
    def fold_factor(self) -> int:
        return self.fold[0] * self.fold[1]


def spatial_extent(
    T: SttMatrix, tile: tuple[int, int, int]
) -> tuple[tuple[int, int], tuple[int, int]]:
    """Interval of each PE coordinate over the tile box [0,s1)x[0,s2)x[0,s3)."""
    out = []
    for r in range(2):
        lo = sum(min(0, T.entries[r][j]) * (tile[j] - 1) for j in range(3))
        hi = sum(max(0, T.entries[r][j]) * (tile[j] - 1) for j in range(3))
        out.append((lo, hi))
    return out[0], out[1]


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def select_loops_and_tile(
    algebra: TensorAlgebra,
    selection: tuple[str, str, str],
    array_dims: tuple[int, int],
    time_budget: int | None = None,
    transform: SttMatrix | None = None,
) -> TileSpec:
    """Fit tile sizes so the tile's PE image fits the array.

    The image is computed through `transform` (identity layout when not
    given: loop 1 -> rows, loop 2 -> cols, loop 3 -> time). When the
    image is strictly smaller than the array, whole copies of it are
    stacked along rows then columns, each copy bound to one value of the
    highest-trip sequential loop.
    """
    for nm in selection:
        algebra.iterator_index(nm)  # raises KeyError on unknown names
    if transform is None:
        transform = SttMatrix(((1, 0, 0), (0, 1, 0), (0, 0, 1)), selection)
    bounds = {nm: b for nm, b in algebra.iterators}
    warnings = []
    for slot, nm in enumerate(selection[:2]):
        if bounds[nm] == 1:
            warnings.append(
                f"iterator {nm!r} with bound 1 in spatial slot {slot}: "
                "the array dimension it feeds stays under-utilized"
            )
    tile = [bounds[nm] for nm in selection]
    if time_budget is not None:
        tile[2] = min(tile[2], max(1, time_budget))

    def fits() -> bool:
        (rlo, rhi), (clo, chi) = spatial_extent(transform, tuple(tile))
        return rhi - rlo < array_dims[0] and chi - clo < array_dims[1]

    # shrink the largest contributor to the overflowing axis until the
    # image fits; terminates because every step reduces one tile size
    while not fits():
        (rlo, rhi), (clo, chi) = spatial_extent(transform, tuple(tile))
        axis = 0 if rhi - rlo >= array_dims[0] else 1
        contrib = [
            (abs(transform.entries[axis][j]) * (tile[j] - 1), j)
            for j in range(3)
            if transform.entries[axis][j] != 0 and tile[j] > 1
        ]
        if not contrib:
            raise ValueError(
                f"tile image cannot fit array axis {axis} "
                f"(transform row {transform.entries[axis]})"
            )
        _, j = max(contrib)
        w = abs(transform.entries[axis][j])
        rest = sum(
            abs(transform.entries[axis][i]) * (tile[i] - 1) for i in range(3) if i != j
        )
        room = array_dims[axis] - 1 - rest
        tile[j] = max(1, room // w + 1)

    counts = tuple(
        _ceil_div(bounds[nm], s) for nm, s in zip(selection, tile)
    )
    sequential = tuple(
        nm for nm, _ in algebra.iterators if nm not in selection
    )

    # stack copies of the footprint across idle rows/cols
    (rlo, rhi), (clo, chi) = spatial_extent(transform, tuple(tile))
    rows_used = rhi - rlo + 1
    cols_used = chi - clo + 1
    fr = max(1, array_dims[0] // rows_used)
    fc = max(1, array_dims[1] // cols_used)
    fold_loop = None
    if fr * fc > 1:
        cands = [(bounds[nm], nm) for nm in sequential if bounds[nm] > 1]
        if cands:
            # max() keeps the first maximum, i.e. declaration order on ties
            trip, fold_loop = max(cands, key=lambda c: c[0])
            # no point unrolling more copies than the loop has values
            while fr * fc > trip and fc > 1:
                fc -= 1
            while fr * fc > trip and fr > 1:
                fr -= 1
    if fold_loop is None:
        fr = fc = 1
    return TileSpec(
        selection=tuple(selection),
        tile=tuple(tile),
        counts=counts,
        sequential=sequential,
        fold=(fr, fc),
        fold_loop=fold_loop,
        warnings=tuple(warnings),
    )
