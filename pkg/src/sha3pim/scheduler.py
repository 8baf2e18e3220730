"""Macro-op expansion and greedy packing of gate streams into cycle bundles.

Producers emit streams of macro operations (XOR2, MUX, COPY plus the raw
primitives) separated by barriers; ops between two barriers are declared
independent by the producer. Expansion rewrites each macro into its fixed
primitive sequence, and a first-fit pass packs the resulting micro-ops into
the fewest bundles it can without violating the crossbar legality rules.

Fixed decompositions (each line is one cycle; presets batched where legal):

    COPY(a)     = INIT1 t; NOT a->t; INIT1 out; NOT t->out
    XOR2(a,b)   = OR2(a,b)->u; AND2(a,b)->v; NOT v->w; AND2(u,w)->out
    MUX(s,a,b)  = NOT s->n; AND2(a,s)->p; AND2(b,n)->q; OR2(p,q)->out

Scratch cells either come attached to the macro (how the hash microcode
pins its layout) or are drawn from a bump allocator that resets at every
barrier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .crossbar import (
    IN_ROW,
    AllocationError,
    Cell,
    CycleBundle,
    GateType,
    MicroOp,
    PartitionMap,
    SchedulingError,
    SimulationError,
    SwitchId,
)


class ShapeError(SimulationError):
    """A macro references cells that share neither a row nor a column."""


class MacroKind(Enum):
    XOR2 = "xor2"
    MUX = "mux"
    COPY = "copy"
    NOT = "not"
    NOR2 = "nor2"
    NOR3 = "nor3"
    OR2 = "or2"
    AND2 = "and2"
    INIT0 = "init0"
    INIT1 = "init1"


_PRIMITIVE = {
    MacroKind.NOT: GateType.NOT,
    MacroKind.NOR2: GateType.NOR2,
    MacroKind.NOR3: GateType.NOR3,
    MacroKind.OR2: GateType.OR2,
    MacroKind.AND2: GateType.AND2,
    MacroKind.INIT0: GateType.INIT0,
    MacroKind.INIT1: GateType.INIT1,
}

_NUM_INPUTS = {
    MacroKind.XOR2: 2, MacroKind.MUX: 3, MacroKind.COPY: 1,
    MacroKind.NOT: 1, MacroKind.NOR2: 2, MacroKind.NOR3: 3,
    MacroKind.OR2: 2, MacroKind.AND2: 2, MacroKind.INIT0: 0, MacroKind.INIT1: 0,
}

SCRATCH_NEEDS = {MacroKind.XOR2: 3, MacroKind.MUX: 3, MacroKind.COPY: 1}


@dataclass(slots=True)
class MacroOp:
    """One logical operation before decomposition into primitives.

    ``scratch`` optionally pins the cells used by the expansion. ``switches``
    lists partition boundaries that must be bridged for this op (used by the
    inter-unit copy hops); such ops only share a bundle with ops declaring
    the identical switch set.
    """

    kind: MacroKind
    orientation: str
    inputs: tuple[Cell, ...]
    output: Cell
    label: str = "main"
    scratch: tuple[Cell, ...] | None = None
    switches: frozenset[SwitchId] = frozenset()

    def validate(self) -> None:
        if len(self.inputs) != _NUM_INPUTS[self.kind]:
            raise ShapeError(
                f"{self.kind.name} takes {_NUM_INPUTS[self.kind]} inputs, "
                f"got {len(self.inputs)}")
        axis = 0 if self.orientation == IN_ROW else 1
        cells = self.inputs + (self.output,) + (self.scratch or ())
        if len({cell[axis] for cell in cells}) > 1:
            raise ShapeError(
                f"{self.kind.name} cells {cells} do not share one "
                f"{'row' if axis == 0 else 'column'}")


_BARRIER = object()


class OpStream:
    """Ordered macro ops with explicit sequence-point barriers."""

    def __init__(self):
        self._items: list = []

    def append(self, op: MacroOp) -> None:
        self._items.append(op)

    def extend(self, ops) -> None:
        self._items.extend(ops)

    def barrier(self) -> None:
        if self._items and self._items[-1] is not _BARRIER:
            self._items.append(_BARRIER)

    def concat(self, other: "OpStream") -> None:
        self.barrier()
        self._items.extend(other._items)

    def __len__(self) -> int:
        return sum(1 for item in self._items if item is not _BARRIER)

    def groups(self):
        """Yield lists of macros delimited by barriers."""
        group: list[MacroOp] = []
        for item in self._items:
            if item is _BARRIER:
                if group:
                    yield group
                    group = []
            else:
                group.append(item)
        if group:
            yield group


class ScratchPool:
    """Bump allocator over a unit's free columns and rows, reset per barrier.

    Macros with the same shape signature share an allocation, so replicas of
    one logical operation across rows (or columns) reuse the same scratch
    lines and stay packable into common bundles.
    """

    def __init__(self, columns=(), rows=()):
        self._columns = list(columns)
        self._rows = list(rows)
        self.reset()

    def reset(self) -> None:
        self._next_col = 0
        self._next_row = 0
        self._assigned: dict[tuple, tuple[int, ...]] = {}

    def _take(self, lines: list, cursor: int, count: int, what: str) -> tuple[int, ...]:
        if cursor + count > len(lines):
            raise AllocationError(f"scratch {what} exhausted "
                                  f"(need {count}, have {len(lines) - cursor})")
        return tuple(lines[cursor:cursor + count])

    def allocate(self, macro: MacroOp, count: int) -> tuple[Cell, ...]:
        axis = 0 if macro.orientation == IN_ROW else 1
        key = (macro.kind, macro.orientation,
               tuple(c[1 - axis] for c in macro.inputs), macro.output[1 - axis])
        line = macro.output[axis]
        if key not in self._assigned:
            if macro.orientation == IN_ROW:
                self._assigned[key] = self._take(self._columns, self._next_col,
                                                 count, "columns")
                self._next_col += count
            else:
                self._assigned[key] = self._take(self._rows, self._next_row,
                                                 count, "rows")
                self._next_row += count
        taken = self._assigned[key]
        if macro.orientation == IN_ROW:
            return tuple((line, col) for col in taken)
        return tuple((row, line) for row in taken)


def expand(macro: MacroOp, pool: ScratchPool | None = None) -> list[list[MicroOp]]:
    """Decompose one macro into stages of co-schedulable micro-ops.

    Stages are sequentially dependent; ops inside one stage are not.
    """
    macro.validate()
    kind = macro.kind
    if kind in (MacroKind.INIT0, MacroKind.INIT1):
        return [[MicroOp(_PRIMITIVE[kind], macro.orientation, (), macro.output)]]
    if kind in _PRIMITIVE:
        # Every gate output is INIT1-prepared; the preset cycle is counted.
        return [[MicroOp(GateType.INIT1, macro.orientation, (), macro.output)],
                [MicroOp(_PRIMITIVE[kind], macro.orientation, macro.inputs,
                         macro.output)]]

    need = SCRATCH_NEEDS[kind]
    scratch = macro.scratch
    if scratch is None:
        if pool is None:
            raise AllocationError(f"{kind.name} needs {need} scratch cells and "
                                  "no pool is available")
        scratch = pool.allocate(macro, need)
    if len(scratch) != need:
        raise ShapeError(f"{kind.name} needs {need} scratch cells, got {len(scratch)}")
    o = macro.orientation

    def init(*cells: Cell) -> list[MicroOp]:
        return [MicroOp(GateType.INIT1, o, (), cell) for cell in cells]

    def op(gate: GateType, ins: tuple[Cell, ...], out: Cell) -> list[MicroOp]:
        return [MicroOp(gate, o, ins, out)]

    if kind is MacroKind.COPY:
        (a,) = macro.inputs
        (t,) = scratch
        return [init(t), op(GateType.NOT, (a,), t),
                init(macro.output), op(GateType.NOT, (t,), macro.output)]

    if kind is MacroKind.XOR2:
        a, b = macro.inputs
        u, v, w = scratch
        return [init(u, v, w, macro.output),
                op(GateType.OR2, (a, b), u),
                op(GateType.AND2, (a, b), v),
                op(GateType.NOT, (v,), w),
                op(GateType.AND2, (u, w), macro.output)]

    if kind is MacroKind.MUX:
        s, a, b = macro.inputs
        n, p, q = scratch
        return [init(n, p, q, macro.output),
                op(GateType.NOT, (s,), n),
                op(GateType.AND2, (a, s), p),
                op(GateType.AND2, (b, n), q),
                op(GateType.OR2, (p, q), macro.output)]

    raise ShapeError(f"unknown macro kind {kind!r}")


@dataclass
class ScheduledProgram:
    """Packed bundles plus the step label of each bundle."""

    bundles: list[CycleBundle] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    def extend(self, other: "ScheduledProgram") -> None:
        self.bundles.extend(other.bundles)
        self.labels.extend(other.labels)

    def __len__(self) -> int:
        return len(self.bundles)


class _OpenBundle:
    """Incremental legality bookkeeping for one bundle being packed.

    INIT cells are admitted freely (per gate polarity) and reconciled into
    grid patterns when the bundle closes; everything else is enforced on
    admission.
    """

    __slots__ = ("ops", "switches", "writes", "reads", "regions")

    def __init__(self, switches: frozenset[SwitchId]):
        self.ops: list[MicroOp] = []
        self.switches = switches
        self.writes: set[Cell] = set()
        self.reads: set[Cell] = set()
        # region -> ("init", gate, set of cells) or (gate, orientation, pattern)
        self.regions: dict[tuple[int, int], tuple] = {}

    def admits(self, op: MicroOp, region: tuple[int, int],
               switches: frozenset[SwitchId]) -> bool:
        if switches != self.switches:
            return False
        if op.output in self.writes or op.output in self.reads:
            return False
        if any(cell in self.writes for cell in op.inputs):
            return False
        sig = self.regions.get(region)
        is_init = op.gate in (GateType.INIT0, GateType.INIT1)
        if sig is None:
            return True
        if is_init:
            return sig[0] == "init" and sig[1] == op.gate
        if sig[0] == "init":
            return False
        axis = 1 if op.orientation == IN_ROW else 0
        return sig == (op.gate, op.orientation,
                       tuple(c[axis] for c in op.inputs), op.output[axis])

    def add(self, op: MicroOp, region: tuple[int, int]) -> None:
        self.ops.append(op)
        self.writes.add(op.output)
        self.reads.update(op.inputs)
        if op.gate in (GateType.INIT0, GateType.INIT1):
            sig = self.regions.get(region)
            if sig is None:
                self.regions[region] = ("init", op.gate, {op.output})
            else:
                sig[2].add(op.output)
        else:
            axis = 1 if op.orientation == IN_ROW else 0
            self.regions[region] = (op.gate, op.orientation,
                                    tuple(c[axis] for c in op.inputs),
                                    op.output[axis])

    def finalize(self) -> list[CycleBundle]:
        """Close the bundle, spilling non-grid INIT cell sets into follow-ups.

        A single-cycle preset drives selected wordlines x bitlines, so the
        cells of one INIT group must form a full cross product. Leftover
        groups become their own (grid-shaped) bundles.
        """
        spill: list[list[MicroOp]] = []
        keep: list[MicroOp] = []
        init_cells_kept: set[Cell] = set()
        for region, sig in self.regions.items():
            if sig[0] != "init":
                continue
            cells = sig[2]
            rows = {r for r, _ in cells}
            cols = {c for _, c in cells}
            if len(cells) == len(rows) * len(cols):
                init_cells_kept.update(cells)
                continue
            # Split into groups of lines sharing the same cross-line set.
            by_col: dict[frozenset, list[Cell]] = {}
            by_row: dict[frozenset, list[Cell]] = {}
            for c in cols:
                key = frozenset(r for r, cc in cells if cc == c)
                by_col.setdefault(key, []).extend((r, c) for r in key)
            for r in rows:
                key = frozenset(c for rr, c in cells if rr == r)
                by_row.setdefault(key, []).extend((r, c) for c in key)
            groups = min((by_col, by_row), key=len)
            first = True
            gate = sig[1]
            orientation = IN_ROW
            for group_cells in groups.values():
                if first:
                    init_cells_kept.update(group_cells)
                    first = False
                else:
                    spill.append([MicroOp(gate, orientation, (), cell)
                                  for cell in sorted(group_cells)])
        for op in self.ops:
            if op.gate in (GateType.INIT0, GateType.INIT1) \
                    and op.output not in init_cells_kept:
                continue
            keep.append(op)
        out = [CycleBundle(keep, self.switches)]
        out.extend(CycleBundle(ops, self.switches) for ops in spill)
        return out


def schedule(stream: OpStream, partition_map: PartitionMap,
             pool: ScratchPool | None = None,
             verify: bool = False) -> ScheduledProgram:
    """Expand and pack a macro stream into legal cycle bundles.

    Within each barrier group a greedy first-fit pass places every micro-op
    into the earliest bundle that stays legal and respects the op's position
    in its macro's expansion. Bundle order concatenated across groups
    preserves the stream's serial semantics.
    """
    program = ScheduledProgram()
    checker = _RegionOracle(partition_map)
    for group in stream.groups():
        if pool is not None:
            pool.reset()
        open_bundles: list[_OpenBundle] = []
        group_label = group[0].label
        for macro in group:
            if macro.label != group_label:
                raise SchedulingError(
                    f"mixed labels {group_label!r}/{macro.label!r} in one barrier group")
            stages = expand(macro, pool)
            floor = -1
            for stage in stages:
                stage_top = floor
                for op in stage:
                    region = checker.region(op, macro.switches)
                    index = floor + 1
                    while index < len(open_bundles) and not \
                            open_bundles[index].admits(op, region, macro.switches):
                        index += 1
                    if index == len(open_bundles):
                        open_bundles.append(_OpenBundle(macro.switches))
                    open_bundles[index].add(op, region)
                    stage_top = max(stage_top, index)
                floor = stage_top
        for ob in open_bundles:
            for bundle in ob.finalize():
                program.bundles.append(bundle)
                program.labels.append(group_label)
    if verify:
        from .crossbar import Crossbar, CrossbarConfig
        shell = Crossbar(CrossbarConfig(rows=partition_map.rows, cols=partition_map.cols,
                                        horizontal_partitions=1, vertical_partitions=1,
                                        unit_rows=1, unit_cols=1),
                         partition_map=partition_map)
        for bundle in program.bundles:
            ok, violations = shell.check_bundle(bundle)
            if not ok:
                raise SchedulingError("scheduler emitted an illegal bundle: "
                                      + "; ".join(violations))
    return program


class _RegionOracle:
    """Cached merged-region lookup for the packer."""

    def __init__(self, partition_map: PartitionMap):
        self._map = partition_map
        self._cache: dict[tuple[Cell, frozenset], tuple[int, int]] = {}

    def region(self, op: MicroOp, switches: frozenset[SwitchId]) -> tuple[int, int]:
        regions = set()
        for cell in op.cells():
            key = (cell, switches)
            value = self._cache.get(key)
            if value is None:
                value = self._map.region_of(cell, switches)
                self._cache[key] = value
            regions.add(value)
        if len(regions) > 1:
            raise SchedulingError(
                f"op on cells {op.cells()} crosses an open partition boundary")
        return regions.pop()
