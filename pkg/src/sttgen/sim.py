"""Cycle-accurate simulation of an ArchSpec.

The machine is synchronous and two-phase: every register (link shift
stages, per-PE operand registers, stationary pairs, output carriers)
computes its next value from previous-cycle state. Operand values reach
PEs only through that register fabric, so a mis-built schedule or
interconnect shows up as a wrong output tensor, not merely a wrong
cycle count.

Each stage is executed in two sweeps. A schedule sweep enumerates the
stage's iterations and derives bank-port activity from them: systolic
injections by back-tracing chains to the array edge, one shared slot
per multicast line and cycle, exit and reduction events for outputs.
The machine sweep then advances the registers cycle by cycle and fires
the MACs. Every bank access is charged to the cycle it happens in; a
global port cap stretches any over-subscribed cycle while the whole
array freezes (global stall), so compute results never depend on the
cap.

Output chains deserve one note: a result slot is born holding zero at
the array edge every cycle and accumulates products as it passes firing
PEs, so entry registers of output chains always present zero to their
outgoing link unless a MAC wrote them this cycle. Without that rule a
slot whose firings start mid-chain would inherit a stale partial sum.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .algebra import TensorAlgebra
from .arch import (
    ArchSpec,
    StageInfo,
    entry_hops,
    exit_hops,
    iter_stages,
)
from .stt import DataflowKind, IORole, ReuseSubKind


class SimulationFault(RuntimeError):
    """A structural invariant was violated while executing a design."""

    def __init__(self, message: str, cycle: int | None = None,
                 bank: str | None = None):
        where = []
        if cycle is not None:
            where.append(f"cycle {cycle}")
        if bank is not None:
            where.append(f"bank {bank}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.cycle = cycle
        self.bank = bank


@dataclass
class BandwidthStat:
    peak: int = 0
    total: int = 0


@dataclass
class SimReport:
    total_cycles: int
    compute_cycles: int
    fill_drain_cycles: int
    stall_cycles: int
    macs: int
    spatial_utilization: float
    bandwidth: dict  # tensor -> BandwidthStat
    peak_bandwidth: int
    avg_bandwidth: float
    output: np.ndarray
    trace: list = field(default_factory=list, repr=False)


def reference_execute(algebra: TensorAlgebra, inputs: dict) -> np.ndarray:
    """Dense loop-nest oracle, evaluated as one vectorized gather."""
    _check_extents(algebra, inputs)
    bounds = algebra.bounds
    grid = np.indices(bounds).reshape(len(bounds), -1)
    dtype = np.result_type(*(inputs[a.tensor_name].dtype for a in algebra.inputs))
    prod = np.ones(grid.shape[1], dtype=dtype)
    for acc in algebra.inputs:
        mat = np.array(acc.access_matrix)
        idx = mat @ grid + np.array(acc.offsets)[:, None]
        prod = prod * inputs[acc.tensor_name][tuple(idx)]
    out_mat = np.array(algebra.output.access_matrix)
    out_idx = out_mat @ grid + np.array(algebra.output.offsets)[:, None]
    out = np.zeros(algebra.extent_of(algebra.output), dtype=dtype)
    np.add.at(out, tuple(out_idx), prod)
    return out


def _check_extents(algebra: TensorAlgebra, inputs: dict) -> None:
    for acc in algebra.inputs:
        want = algebra.extent_of(acc)
        if acc.tensor_name not in inputs:
            raise ValueError(f"missing input tensor {acc.tensor_name!r}")
        got = tuple(inputs[acc.tensor_name].shape)
        if got != want:
            raise ValueError(
                f"{acc.tensor_name}: extent {got} does not match required {want}"
            )


# --- per-stage schedule ------------------------------------------------------


@dataclass
class _TensorSched:
    """Bank-port activity of one tensor within one stage.

    Times are stage-local; firing cycles run over [0, span), injections
    may start at -fill and exits may run past span into the drain window.
    """

    mode: str  # sys | stat | mc | uni
    inject_at: dict = field(default_factory=dict)  # t -> [(pe, idx, bank)]
    slots_at: dict = field(default_factory=dict)  # t -> [(bank, idx)]
    exits_at: dict = field(default_factory=dict)  # t -> [(bank, idx, tails)]
    per_pe: dict = field(default_factory=dict)  # pe -> idx (stationary)


@dataclass
class _StageProgram:
    info: StageInfo
    firings: dict  # tau -> [(pe, row, band)] sorted
    scheds: dict  # tensor name -> _TensorSched
    sel_parts: dict  # tensor name -> np.ndarray, one index row per iteration
    seq_off: dict  # (tensor name, band) -> np.ndarray index offset
    out_last: int  # latest output exit time (sanity margin for the window)


class _Simulator:
    def __init__(self, arch: ArchSpec, inputs: dict, bw_cap: int | None,
                 collect_trace: bool):
        if bw_cap is not None and bw_cap < 1:
            raise ValueError("bw_cap must be a positive element count")
        self.arch = arch
        self.algebra = arch.algebra
        _check_extents(self.algebra, inputs)
        self.inputs = inputs
        self.cap = bw_cap
        self.collect = collect_trace
        self.fp = arch.fp
        self.T = np.array([list(r) for r in arch.transform.entries])
        self.plans = list(arch.plans)
        self.out_plan = self.plans[-1]
        if self.out_plan.io_role is not IORole.OUTPUT:
            raise ValueError("plans must end with the output tensor")
        dtype = np.result_type(
            *(inputs[a.tensor_name].dtype for a in self.algebra.inputs)
        )
        self.out = np.zeros(self.algebra.extent_of(self.algebra.output), dtype)
        self.zero = self.out.dtype.type(0)

        sel_idx = [
            self.algebra.iterator_index(n)
            for n in arch.transform.selected_iterators
        ]
        self.seq_names = [nm for nm, _, _ in arch.stages.sequential]
        seq_idx = [self.algebra.iterator_index(n) for n in self.seq_names]
        self.fold_loop = arch.stages.fold_loop
        self.a_sel = {}
        self.a_seq = {}
        for p in self.plans:
            m = np.array(p.access.access_matrix)
            self.a_sel[p.name] = m[:, sel_idx]
            self.a_seq[p.name] = m[:, seq_idx] if seq_idx else None

        # bank lookup tables
        self.entry_bank = {}  # (tensor, pe) -> edge bank id
        self.pe_bank = {}  # (tensor, pe) -> per-PE bank id
        self.group_bank = {}  # (tensor, pe) -> sharing-line bank id
        self.group_members = {}  # bank id -> ordered member tuple
        for b in arch.banks:
            if b.kind in ("systolic_entry", "systolic_exit"):
                self.entry_bank[(b.tensor, b.pes[0])] = b.id
            elif b.kind in ("stationary", "unicast"):
                self.pe_bank[(b.tensor, b.pes[0])] = b.id
            else:  # multicast, broadcast, tree_root
                self.group_members[b.id] = b.pes
                for pe in b.pes:
                    self.group_bank[(b.tensor, pe)] = b.id

        # persistent machine state
        self.sys_regs = {}  # input tensor -> {pe: value}
        self.carried = {}  # output tensor -> {pe: value}
        self.pipes = {}  # tensor -> {dst: (src, deque)}
        self.chain_pes = {}  # tensor -> every chained PE, fixed order
        self.stat_regs = {}  # input tensor -> {pe: value}
        self.stat_acc = {}  # output tensor -> {pe: value}
        for p in self.plans:
            if p.steps.systolic is not None:
                store = self.sys_regs if p.io_role is IORole.INPUT else self.carried
                store[p.name] = {}
                self.pipes[p.name] = {}
            mods = {m.value for m in p.modules}
            if "c" in mods:
                self.stat_regs[p.name] = {}
            if "d" in mods:
                self.stat_acc[p.name] = {}
        for link in arch.links:
            self.pipes[link.tensor][link.dst] = (
                link.src, deque([self.zero] * link.delay, maxlen=link.delay)
            )
        all_pes = set()
        for b in range(self.fp.bands):
            all_pes.update(self.fp.band_pes(b))
        for name in self.pipes:
            self.chain_pes[name] = tuple(sorted(all_pes))

        # statistics
        self.clock = 0
        self.stalls = 0
        self.mac_cycles = 0
        self.total_macs = 0
        self.bw = {p.name: BandwidthStat() for p in self.plans}
        self.peak_cycle_demand = 0
        self.trace = []

    # -- event accounting with the global port cap --

    def _emit(self, transfers: list, macs: list) -> None:
        """Retire one nominal cycle. Transfers exceeding the port cap
        stretch it; MACs land on the final (un-stalled) slice."""
        cap = self.cap
        if cap is not None and len(transfers) > cap:
            chunks = [transfers[i:i + cap] for i in range(0, len(transfers), cap)]
        else:
            chunks = [transfers]
        for chunk in chunks[:-1]:
            self._account(chunk)
            self.clock += 1
            self.stalls += 1
        self._account(chunks[-1])
        if macs:
            self.mac_cycles += 1
            self.total_macs += len(macs)
            if self.collect:
                for pe, tensor, idx in macs:
                    self.trace.append((self.clock, pe[0], pe[1], "mac",
                                       tensor, *idx))
        self.clock += 1

    def _account(self, chunk: list) -> None:
        counts = {}
        for ev, tensor, pe, idx in chunk:
            counts[tensor] = counts.get(tensor, 0) + 1
            if self.collect:
                self.trace.append((self.clock, pe[0], pe[1], ev, tensor, *idx))
        total = 0
        for tensor, n in counts.items():
            st = self.bw[tensor]
            st.total += n
            if n > st.peak:
                st.peak = n
            total += n
        if total > self.peak_cycle_demand:
            self.peak_cycle_demand = total

    def _bounds_check(self, shape, idx, tensor, bank) -> None:
        if len(idx) != len(shape) or any(
            not 0 <= i < s for i, s in zip(idx, shape)
        ):
            raise SimulationFault(
                f"{tensor}: index {idx} outside extent {tuple(shape)}",
                cycle=self.clock, bank=str(bank),
            )

    # -- schedule sweep --

    def _active_bands(self, info: StageInfo) -> list:
        fp = self.fp
        if self.fold_loop is None:
            return [(b, None) for b in range(fp.bands)]
        bound = dict(self.algebra.iterators)[self.fold_loop]
        base = info.seq[self.fold_loop]
        return [(b, base + b) for b in range(fp.bands) if base + b < bound]

    def _build_program(self, info: StageInfo) -> _StageProgram:
        fp = self.fp
        grid = np.indices(info.extents).reshape(3, -1).T
        img = grid @ self.T.T
        qs = img[:, :2] + np.array(fp.p_shift)
        taus = img[:, 2] + fp.t_shift
        xsel = grid + np.array(info.origin)
        n = grid.shape[0]

        sel_parts = {}
        for p in self.plans:
            sel_parts[p.name] = xsel @ self.a_sel[p.name].T + np.array(
                p.access.offsets
            )
        bands = self._active_bands(info)
        seq_off = {}
        for p in self.plans:
            for b, fold_val in bands:
                if self.a_seq[p.name] is None:
                    off = np.zeros(p.access.rank, dtype=int)
                else:
                    vals = [
                        fold_val if nm == self.fold_loop else info.seq[nm]
                        for nm in self.seq_names
                    ]
                    off = self.a_seq[p.name] @ np.array(vals)
                seq_off[(p.name, b)] = off

        hops_in = {}
        hops_out = {}
        for p in self.plans:
            if p.steps.systolic is None:
                continue
            step = p.steps.systolic
            hops_in[p.name] = np.array(
                [entry_hops((int(q[0]), int(q[1])), step, fp) for q in qs]
            )
            if p.io_role is IORole.OUTPUT:
                hops_out[p.name] = np.array(
                    [exit_hops((int(q[0]), int(q[1])), step, fp) for q in qs]
                )

        scheds = {p.name: _TensorSched(mode=self._mode_of(p)) for p in self.plans}
        claims = {p.name: {} for p in self.plans}  # consistency while building

        firings = {}
        out_last = 0
        for r in range(n):
            q0, q1 = int(qs[r, 0]), int(qs[r, 1])
            tau = int(taus[r])
            for b, _fv in bands:
                ox, oy = fp.band_origin(b)
                pe = (ox + q0, oy + q1)
                firings.setdefault(tau, []).append((pe, r, b))
                for p in self.plans:
                    name = p.name
                    sched = scheds[name]
                    idx = tuple(
                        int(v) for v in sel_parts[name][r] + seq_off[(name, b)]
                    )
                    if sched.mode == "sys":
                        step = p.steps.systolic
                        sm = p.dataflow.sub_kind is ReuseSubKind.SYSTOLIC_MULTICAST
                        if p.io_role is IORole.INPUT:
                            k = int(hops_in[name][r])
                            epe = (pe[0] - k * step[0], pe[1] - k * step[1])
                            t = tau - k * step[2]
                            key = ("in", epe, t)
                            old = claims[name].get(key)
                            if old is None:
                                claims[name][key] = idx
                                bank = (self.group_bank if sm else
                                        self.entry_bank)[(name, epe)]
                                sched.inject_at.setdefault(t, []).append(
                                    (epe, idx, bank))
                            elif old != idx:
                                raise SimulationFault(
                                    f"{name}: slot {key} claimed by elements "
                                    f"{old} and {idx}")
                        else:
                            k = int(hops_out[name][r])
                            tpe = (pe[0] + k * step[0], pe[1] + k * step[1])
                            t = tau + k * step[2]
                            bank = (self.group_bank if sm else
                                    self.entry_bank)[(name, tpe)]
                            key = ("out", bank, t)
                            old = claims[name].get(key)
                            if old is None:
                                claims[name][key] = idx
                                sched.exits_at.setdefault(t, []).append(
                                    (bank, idx, [tpe]))
                                out_last = max(out_last, t)
                            elif old != idx:
                                raise SimulationFault(
                                    f"{name}: exit {key} claimed by elements "
                                    f"{old} and {idx}")
                            else:
                                for bank2, _i, tails in sched.exits_at[t]:
                                    if bank2 == bank and tpe not in tails:
                                        tails.append(tpe)
                    elif sched.mode == "stat":
                        old = claims[name].setdefault(pe, idx)
                        if old != idx:
                            raise SimulationFault(
                                f"{name}: stationary register at {pe} needs "
                                f"two elements in one stage: {old} and {idx}")
                    elif sched.mode == "mc":
                        bank = self.group_bank[(name, pe)]
                        key = (bank, tau)
                        old = claims[name].get(key)
                        if old is None:
                            claims[name][key] = idx
                            sched.slots_at.setdefault(tau, []).append(
                                (bank, idx))
                        elif old != idx:
                            raise SimulationFault(
                                f"{name}: line {bank} asked for elements "
                                f"{old} and {idx} in one cycle")
                    # unicast: reads/writes ride on firings, no schedule

        for name, sched in scheds.items():
            if sched.mode == "stat":
                sched.per_pe = claims[name]
        for tau in firings:
            firings[tau].sort()
        for sched in scheds.values():
            for bucket in (sched.inject_at, sched.slots_at, sched.exits_at):
                for t in bucket:
                    bucket[t].sort(key=lambda e: e[0])
        return _StageProgram(
            info=info,
            firings=firings,
            scheds=scheds,
            sel_parts=sel_parts,
            seq_off=seq_off,
            out_last=out_last,
        )

    def _mode_of(self, p) -> str:
        df = p.dataflow
        if p.steps.systolic is not None:
            return "sys"
        if df.kind is DataflowKind.STATIONARY or (
            df.sub_kind is ReuseSubKind.MULTICAST_STATIONARY
        ):
            return "stat"
        if df.kind in (DataflowKind.MULTICAST, DataflowKind.REDUCTION_TREE) or (
            df.sub_kind is ReuseSubKind.BROADCAST
        ):
            return "mc"
        if df.kind is DataflowKind.UNICAST:
            return "uni"
        raise ValueError(f"{p.name}: no executable mode for {df.kind}")

    # -- machine sweep --

    def run(self) -> None:
        programs = (
            self._build_program(info)
            for info in iter_stages(self.algebra, self.arch.stages)
        )
        prog = next(programs)
        self._emit_initial_load(prog)
        pending = []
        for nxt in programs:
            pending = self._run_stage(prog, nxt, pending)
            prog = nxt
        pending = self._run_stage(prog, None, pending)
        if pending:
            self._emit([("wr", t, pe, idx) for t, pe, idx in pending], [])

    def _load_events(self, prog: _StageProgram) -> list:
        """Bank reads that fill stationary registers for a stage."""
        events = []
        for p in self.plans:
            if p.io_role is not IORole.INPUT:
                continue
            sched = prog.scheds[p.name]
            if sched.mode != "stat":
                continue
            shared = p.dataflow.sub_kind is ReuseSubKind.MULTICAST_STATIONARY
            seen = set()
            for pe in sorted(sched.per_pe):
                idx = sched.per_pe[pe]
                if shared:
                    bank = self.group_bank[(p.name, pe)]
                    if bank in seen:
                        continue
                    seen.add(bank)
                events.append(("ld", p.name, pe, idx))
        return events

    def _apply_loads(self, prog: _StageProgram) -> None:
        for p in self.plans:
            if p.io_role is not IORole.INPUT:
                continue
            sched = prog.scheds[p.name]
            if sched.mode != "stat":
                continue
            arr = self.inputs[p.name]
            regs = self.stat_regs[p.name]
            for pe, idx in sched.per_pe.items():
                self._bounds_check(arr.shape, idx, p.name, pe)
                regs[pe] = arr[idx]

    def _emit_initial_load(self, prog: _StageProgram) -> None:
        events = self._load_events(prog)
        if events:
            self._emit(events, [])

    def _index_for(self, name, prog: _StageProgram, r: int, band: int) -> tuple:
        return tuple(
            int(v) for v in prog.sel_parts[name][r] + prog.seq_off[(name, band)]
        )

    def _run_stage(self, prog: _StageProgram, nxt, pending: list) -> list:
        sched = self.arch.stages
        span = sched.span
        lo = -sched.fill
        hi = span + sched.drain
        out_plan = self.out_plan
        oname = out_plan.name
        osched = prog.scheds[oname]
        if osched.mode == "sys":
            hi = max(hi, prog.out_last + 1)
        self._apply_loads(prog)

        # background traffic hidden under this stage's compute window:
        # stationary loads for the next stage, drains from the previous one
        hidden = {}
        if nxt is not None:
            for i, ev in enumerate(self._load_events(nxt)):
                hidden.setdefault(i % span, []).append(ev)
        for i, (tensor, pe, idx) in enumerate(pending):
            hidden.setdefault(i % span, []).append(("wr", tensor, pe, idx))

        in_plans = self.plans[:-1]
        for tau in range(lo, hi):
            transfers = []
            macs = []
            # 1. input chains shift, injections land on edge registers, and
            # only then do the links sample this cycle's register values
            for name, regs in self.sys_regs.items():
                pipes = self.pipes[name]
                for dst, (_src, pipe) in pipes.items():
                    regs[dst] = pipe.popleft()
                for epe, idx, bank in prog.scheds[name].inject_at.get(tau, ()):
                    arr = self.inputs[name]
                    self._bounds_check(arr.shape, idx, name, bank)
                    regs[epe] = arr[idx]
                    transfers.append(("rd", name, epe, idx))
                for _dst, (src, pipe) in pipes.items():
                    pipe.append(regs.get(src, self.zero))
            # 2. output chains shift; edge slots are born holding zero; the
            # links sample carriers only after this cycle's MACs (step 4)
            out_new = None
            if osched.mode == "sys":
                pipes = self.pipes[oname]
                out_new = {pe: self.zero for pe in self.chain_pes[oname]}
                for dst, (_src, pipe) in pipes.items():
                    out_new[dst] = pipe.popleft()
            # 3. sharing wires driven by their banks for this cycle
            wires = {}
            for p in in_plans:
                tsched = prog.scheds[p.name]
                if tsched.mode != "mc":
                    continue
                arr = self.inputs[p.name]
                for bank, idx in tsched.slots_at.get(tau, ()):
                    self._bounds_check(arr.shape, idx, p.name, bank)
                    wires[(p.name, bank)] = arr[idx]
                    head = self.group_members[bank][0]
                    transfers.append(("rd", p.name, head, idx))
            # 4. fire
            fired = set()
            tree_parts = {}
            for pe, r, band in prog.firings.get(tau, ()):
                if pe in fired:
                    raise SimulationFault(
                        f"PE {pe} asked to compute twice", cycle=self.clock
                    )
                fired.add(pe)
                value = None
                for p in in_plans:
                    name = p.name
                    mode = prog.scheds[name].mode
                    if mode == "sys":
                        v = self.sys_regs[name][pe]
                    elif mode == "stat":
                        v = self.stat_regs[name][pe]
                    elif mode == "mc":
                        v = wires[(name, self.group_bank[(name, pe)])]
                    else:  # unicast: the PE's private bank feeds it now
                        idx = self._index_for(name, prog, r, band)
                        arr = self.inputs[name]
                        self._bounds_check(arr.shape, idx, name, pe)
                        transfers.append(("rd", name, pe, idx))
                        v = arr[idx]
                    value = v if value is None else value * v
                out_idx = self._index_for(oname, prog, r, band)
                macs.append((pe, oname, out_idx))
                if osched.mode == "sys":
                    out_new[pe] = out_new[pe] + value
                elif osched.mode == "stat":
                    acc = self.stat_acc[oname]
                    acc[pe] = acc.get(pe, self.zero) + value
                elif osched.mode == "mc":
                    bank = self.group_bank[(oname, pe)]
                    tree_parts.setdefault(bank, {})[pe] = value
                else:  # unicast write-through
                    self._bounds_check(self.out.shape, out_idx, oname, pe)
                    self.out[out_idx] += value
                    transfers.append(("wr", oname, pe, out_idx))
            if out_new is not None:
                self.carried[oname] = out_new
                for _dst, (src, pipe) in self.pipes[oname].items():
                    pipe.append(out_new.get(src, self.zero))
            # 5. reduction lines close this cycle's partial sums
            if osched.mode == "mc":
                for bank, idx in osched.slots_at.get(tau, ()):
                    parts = tree_parts.get(bank, {})
                    total = self.zero
                    for leaf in self.group_members[bank]:
                        if leaf in parts:
                            total = total + parts[leaf]
                    self._bounds_check(self.out.shape, idx, oname, bank)
                    self.out[idx] += total
                    root = self.group_members[bank][0]
                    transfers.append(("wr", oname, root, idx))
            # 6. systolic exits drain finished slots at the far edge
            if osched.mode == "sys":
                carried = self.carried[oname]
                sm = out_plan.dataflow.sub_kind is ReuseSubKind.SYSTOLIC_MULTICAST
                for bank, idx, tails in osched.exits_at.get(tau, ()):
                    if sm:
                        total = self.zero
                        present = set(tails)
                        for leaf in self.group_members[bank]:
                            if leaf in present:
                                total = total + carried[leaf]
                    else:
                        total = carried[tails[0]]
                    self._bounds_check(self.out.shape, idx, oname, bank)
                    self.out[idx] += total
                    transfers.append(("wr", oname, tails[0], idx))
            if 0 <= tau < span:
                transfers.extend(hidden.get(tau, ()))
            self._emit(transfers, macs)

        # stage boundary: stationary accumulators retire to their shadows
        drains = []
        if osched.mode == "stat":
            accs = self.stat_acc[oname]
            if out_plan.dataflow.sub_kind is ReuseSubKind.MULTICAST_STATIONARY:
                done = set()
                for pe in sorted(osched.per_pe):
                    bank = self.group_bank[(oname, pe)]
                    if bank in done:
                        continue
                    done.add(bank)
                    idx = osched.per_pe[pe]
                    total = self.zero
                    for leaf in self.group_members[bank]:
                        if leaf in osched.per_pe:
                            total = total + accs.pop(leaf, self.zero)
                    self._bounds_check(self.out.shape, idx, oname, bank)
                    self.out[idx] += total
                    drains.append((oname, self.group_members[bank][0], idx))
            else:
                for pe in sorted(osched.per_pe):
                    idx = osched.per_pe[pe]
                    val = accs.pop(pe, self.zero)
                    self._bounds_check(self.out.shape, idx, oname, pe)
                    self.out[idx] += val
                    drains.append((oname, pe, idx))
        return drains

    def report(self) -> SimReport:
        expect = 1
        for _, bound in self.algebra.iterators:
            expect *= bound
        if self.total_macs != expect:
            raise SimulationFault(
                f"work conservation broken: {self.total_macs} MACs for "
                f"{expect} iteration points"
            )
        total = self.clock
        rows, cols = self.arch.array
        util = self.total_macs / (total * rows * cols) if total else 0.0
        grand_total = sum(s.total for s in self.bw.values())
        avg = grand_total / self.mac_cycles if self.mac_cycles else 0.0
        return SimReport(
            total_cycles=total,
            compute_cycles=self.mac_cycles,
            fill_drain_cycles=total - self.mac_cycles,
            stall_cycles=self.stalls,
            macs=self.total_macs,
            spatial_utilization=util,
            bandwidth=self.bw,
            peak_bandwidth=self.peak_cycle_demand,
            avg_bandwidth=avg,
            output=self.out,
            trace=self.trace,
        )


def simulate(arch: ArchSpec, inputs: dict, bw_cap: int | None = None,
             collect_trace: bool = False, trace_path=None) -> SimReport:
    """Execute a design cycle by cycle and return measured behavior.

    ``inputs`` maps tensor names to arrays whose extents must match the
    algebra exactly. With ``bw_cap`` set, any cycle demanding more bank
    transfers than the cap stalls the whole array for the extra cycles;
    the computed output never depends on the cap. Integer inputs yield
    exact results; float inputs are accumulated in a fixed order, so
    runs are deterministic either way.
    """
    machine = _Simulator(arch, inputs, bw_cap=bw_cap,
                         collect_trace=collect_trace or trace_path is not None)
    machine.run()
    rep = machine.report()
    if trace_path is not None:
        write_trace(trace_path, rep.trace)
    return rep


def write_trace(path, trace) -> None:
    """Write trace rows as CSV: cycle, pe_x, pe_y, event, tensor, index."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "pe_x", "pe_y", "event", "tensor", "index"])
        for row in trace:
            cycle, x, y, event, tensor, *idx = row
            w.writerow([cycle, x, y, event, tensor,
                        " ".join(str(i) for i in idx)])


def measure_bandwidth(trace) -> dict:
    """Per-tensor (peak, average) bank transfers per cycle from a trace.

    The average is taken over compute cycles (cycles with at least one
    MAC), matching how sustained feed rate is usually quoted.
    """
    per_cycle = {}
    totals = {}
    mac_cycles = set()
    for row in trace:
        cycle, _x, _y, event, tensor = row[:5]
        if event == "mac":
            mac_cycles.add(cycle)
            continue
        key = (tensor, cycle)
        per_cycle[key] = per_cycle.get(key, 0) + 1
        totals[tensor] = totals.get(tensor, 0) + 1
    peaks = {}
    for (tensor, _cycle), n in per_cycle.items():
        peaks[tensor] = max(peaks.get(tensor, 0), n)
    denom = len(mac_cycles)
    return {
        tensor: (peaks[tensor], totals[tensor] / denom if denom else 0.0)
        for tensor in totals
    }
