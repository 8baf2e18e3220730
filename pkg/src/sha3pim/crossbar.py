"""Logical model of one partitioned memristive crossbar executing stateful logic.

The crossbar is a grid of binary cells. In every clock cycle a *bundle* of
single-cycle gates executes; each gate reads input cells and overwrites one
output cell along a single wordline (in-row) or bitline (in-column).
Transistor switches at fixed partition boundaries electrically isolate
sub-arrays, which is what lets unrelated gates share a cycle. Bundles are
validated against the alignment/isolation rules before execution, and every
executed gate is charged one gate-energy quantum.

Peripheral reads/writes (message load, digest readout) move data in and out
of the array without gates; they are accounted under the separate ``io``
label with a per-row cycle cost and zero gate energy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import IO, Iterable

import numpy as np

Cell = tuple[int, int]
SwitchId = tuple[str, int]   # ("row", boundary_row) or ("col", boundary_col)

IN_ROW = "row"
IN_COL = "col"


class GateType(IntEnum):
    """Single-cycle stateful-logic primitives (plus output presets)."""

    INIT0 = 0
    INIT1 = 1
    NOT = 2
    NOR2 = 3
    NOR3 = 4
    OR2 = 5
    AND2 = 6
    COPY = 7


GATE_NUM_INPUTS = {
    GateType.INIT0: 0,
    GateType.INIT1: 0,
    GateType.NOT: 1,
    GateType.NOR2: 2,
    GateType.NOR3: 3,
    GateType.OR2: 2,
    GateType.AND2: 2,
    GateType.COPY: 1,
}


def gate_function(gate: GateType, inputs: tuple[int, ...]) -> int:
    if gate == GateType.INIT0:
        return 0
    if gate == GateType.INIT1:
        return 1
    if gate == GateType.NOT:
        return inputs[0] ^ 1
    if gate == GateType.NOR2 or gate == GateType.NOR3:
        return 0 if any(inputs) else 1
    if gate == GateType.OR2:
        return 1 if any(inputs) else 0
    if gate == GateType.AND2:
        return inputs[0] & inputs[1]
    if gate == GateType.COPY:
        return inputs[0]
    raise ValueError(f"unknown gate {gate!r}")


class SimulationError(Exception):
    """Base class for crossbar model errors."""


class AddressError(SimulationError):
    """A referenced cell lies outside the crossbar."""


class SchedulingError(SimulationError):
    """A bundle violates the single-cycle legality rules."""


class StrictInitError(SimulationError):
    """A gate read a cell that was never written since the last reset."""


class AllocationError(SimulationError):
    """A scratch area ran out of free cells."""


class CapacityError(SimulationError):
    """More concurrent messages than available hash units."""


@dataclass
class CrossbarConfig:
    """Geometry and cost parameters of one crossbar array.

    Defaults model a 1024x1024 array split into 27x14 partitions of
    72x37 cells each, with 3ns/6.4fJ gates on 4F^2 cells.
    """

    rows: int = 1024
    cols: int = 1024
    horizontal_partitions: int = 27   # partitions along a row (column direction)
    vertical_partitions: int = 14     # partitions along a column (row direction)
    unit_rows: int = 72
    unit_cols: int = 37
    gate_delay_ns: float = 3.0
    gate_energy_fj: float = 6.4
    cell_area_f2: float = 4.0
    io_cycles_per_row: int = 1
    strict_init: bool = False

    def __post_init__(self):
        numeric = (self.rows, self.cols, self.horizontal_partitions,
                   self.vertical_partitions, self.unit_rows, self.unit_cols,
                   self.gate_delay_ns, self.gate_energy_fj, self.cell_area_f2,
                   self.io_cycles_per_row)
        if any(v <= 0 for v in numeric):
            raise ValueError("all crossbar parameters must be positive")
        if self.rows < self.vertical_partitions * self.unit_rows:
            raise ValueError(
                f"{self.rows} rows cannot hold {self.vertical_partitions} "
                f"partitions of {self.unit_rows} rows")
        if self.cols < self.horizontal_partitions * self.unit_cols:
            raise ValueError(
                f"{self.cols} cols cannot hold {self.horizontal_partitions} "
                f"partitions of {self.unit_cols} cols")

    @property
    def num_units(self) -> int:
        return self.horizontal_partitions * self.vertical_partitions

    @property
    def clock_hz(self) -> float:
        return 1.0 / (self.gate_delay_ns * 1e-9)


@dataclass(slots=True)
class MicroOp:
    """One gate event: a primitive applied to cells sharing a row or column."""

    gate: GateType
    orientation: str            # IN_ROW or IN_COL
    inputs: tuple[Cell, ...]
    output: Cell

    def cells(self) -> tuple[Cell, ...]:
        return self.inputs + (self.output,)

    def validate_shape(self) -> str | None:
        """Return a violation message, or None if the op is well-formed."""
        if self.orientation not in (IN_ROW, IN_COL):
            return f"unknown orientation {self.orientation!r}"
        expected = GATE_NUM_INPUTS[self.gate]
        if len(self.inputs) != expected:
            return f"{self.gate.name} takes {expected} inputs, got {len(self.inputs)}"
        if self.output in self.inputs:
            return f"output cell {self.output} repeats an input"
        axis = 0 if self.orientation == IN_ROW else 1
        line = self.output[axis]
        if any(cell[axis] != line for cell in self.inputs):
            return f"in-{self.orientation} op cells do not share {self.orientation} {line}"
        return None


@dataclass(slots=True)
class CycleBundle:
    """Gate events co-scheduled in one clock cycle.

    Switches default open; ``closed_switches`` lists the partition
    boundaries explicitly bridged during this cycle.
    """

    ops: list[MicroOp] = field(default_factory=list)
    closed_switches: frozenset[SwitchId] = frozenset()


class PartitionMap:
    """Partition boundaries of a crossbar and per-cycle switch merging."""

    def __init__(self, row_boundaries: Iterable[int], col_boundaries: Iterable[int],
                 rows: int, cols: int):
        self.row_boundaries = sorted(row_boundaries)
        self.col_boundaries = sorted(col_boundaries)
        self.rows = rows
        self.cols = cols
        for b, limit, name in ((self.row_boundaries, rows, "row"),
                               (self.col_boundaries, cols, "col")):
            if any(x <= 0 or x >= limit for x in b):
                raise ValueError(f"{name} boundary outside grid")
            if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
                raise ValueError(f"{name} boundaries must be strictly increasing")

    @classmethod
    def from_config(cls, config: CrossbarConfig) -> "PartitionMap":
        rb = [config.unit_rows * i for i in range(1, config.vertical_partitions)]
        cb = [config.unit_cols * i for i in range(1, config.horizontal_partitions)]
        return cls(rb, cb, config.rows, config.cols)

    def switch_ids(self) -> list[SwitchId]:
        return ([("row", b) for b in self.row_boundaries]
                + [("col", b) for b in self.col_boundaries])

    @staticmethod
    def _group_index(boundaries: list[int], closed: set[int], coord: int) -> int:
        """Index of the merged interval containing ``coord``.

        Adjacent intervals separated by a closed switch count as one group.
        """
        group = 0
        for b in boundaries:
            if coord < b:
                break
            if b not in closed:
                group += 1
        return group

    def region_of(self, cell: Cell, closed_switches: frozenset[SwitchId]) -> tuple[int, int]:
        closed_rows = {b for kind, b in closed_switches if kind == "row"}
        closed_cols = {b for kind, b in closed_switches if kind == "col"}
        return (self._group_index(self.row_boundaries, closed_rows, cell[0]),
                self._group_index(self.col_boundaries, closed_cols, cell[1]))

    def regions_of_bundle(self, bundle: CycleBundle) -> list[set[tuple[int, int]]]:
        """Per-op sets of merged regions touched by the op's cells."""
        closed_rows = {b for kind, b in bundle.closed_switches if kind == "row"}
        closed_cols = {b for kind, b in bundle.closed_switches if kind == "col"}
        out = []
        for op in bundle.ops:
            regions = set()
            for r, c in op.cells():
                regions.add((self._group_index(self.row_boundaries, closed_rows, r),
                             self._group_index(self.col_boundaries, closed_cols, c)))
            out.append(regions)
        return out


@dataclass
class LabelStats:
    cycles: int = 0
    gate_executions: int = 0


@dataclass
class ExecutionStats:
    """Latency/energy bookkeeping, broken down by microcode step label."""

    gate_energy_fj: float = 6.4
    cycles: int = 0
    gate_executions: int = 0
    per_label: dict[str, LabelStats] = field(default_factory=dict)

    def _label(self, label: str) -> LabelStats:
        if label not in self.per_label:
            self.per_label[label] = LabelStats()
        return self.per_label[label]

    def add_cycles(self, label: str, cycles: int, gate_executions: int) -> None:
        self.cycles += cycles
        self.gate_executions += gate_executions
        entry = self._label(label)
        entry.cycles += cycles
        entry.gate_executions += gate_executions

    @property
    def energy_fj(self) -> float:
        return self.gate_executions * self.gate_energy_fj

    def merge(self, other: "ExecutionStats") -> None:
        self.cycles += other.cycles
        self.gate_executions += other.gate_executions
        for label, entry in other.per_label.items():
            mine = self._label(label)
            mine.cycles += entry.cycles
            mine.gate_executions += entry.gate_executions

    def as_dict(self) -> dict:
        return {
            "cycles": self.cycles,
            "gate_executions": self.gate_executions,
            "energy_fj": self.energy_fj,
            "per_label": {k: {"cycles": v.cycles, "gate_executions": v.gate_executions}
                          for k, v in sorted(self.per_label.items())},
        }


class Crossbar:
    """One crossbar instance: cell grid, partition map, stats, trace."""

    def __init__(self, config: CrossbarConfig | None = None,
                 partition_map: PartitionMap | None = None):
        self.config = config or CrossbarConfig()
        self.partition_map = partition_map or PartitionMap.from_config(self.config)
        self.state = np.zeros((self.config.rows, self.config.cols), dtype=np.uint8)
        self.initialized = np.zeros((self.config.rows, self.config.cols), dtype=np.uint8)
        self.stats = ExecutionStats(gate_energy_fj=self.config.gate_energy_fj)
        self._trace: IO[str] | None = None

    # ------------------------------------------------------------------ setup

    def reset(self) -> None:
        self.state[:] = 0
        self.initialized[:] = 0
        self.stats = ExecutionStats(gate_energy_fj=self.config.gate_energy_fj)

    def attach_trace(self, stream: IO[str]) -> None:
        """Emit one JSON line per executed cycle to ``stream``."""
        self._trace = stream

    # ---------------------------------------------------------------- legality

    def check_bundle(self, bundle: CycleBundle) -> tuple[bool, list[str]]:
        """Validate a bundle against the single-cycle legality rules.

        Legal iff: op shapes are well-formed and in bounds; no op spans an
        open switch; within each (merged) partition all ops share one gate
        type and orientation with aligned line patterns (arbitrary INIT cell
        sets must form a rows x cols grid); and no read/write or write/write
        cell conflicts exist anywhere in the bundle.
        """
        violations: list[str] = []
        for i, op in enumerate(bundle.ops):
            msg = op.validate_shape()
            if msg:
                violations.append(f"op {i}: {msg}")
                continue
            for r, c in op.cells():
                if not (0 <= r < self.config.rows and 0 <= c < self.config.cols):
                    violations.append(f"op {i}: cell ({r},{c}) out of bounds")
                    break
        if violations:
            return False, violations

        for sw in bundle.closed_switches:
            if sw not in self.partition_map.switch_ids():
                violations.append(f"no switch at boundary {sw}")
        if violations:
            return False, violations

        # Rule 2/3: each op must sit inside a single merged region.
        op_regions = self.partition_map.regions_of_bundle(bundle)
        by_region: dict[tuple[int, int], list[int]] = {}
        for i, regions in enumerate(op_regions):
            if len(regions) > 1:
                violations.append(f"op {i}: crosses an open partition boundary")
            else:
                by_region.setdefault(next(iter(regions)), []).append(i)

        # Rule 1: per-region uniformity.
        for region, indices in by_region.items():
            ops = [bundle.ops[i] for i in indices]
            gates = {op.gate for op in ops}
            if len(gates) > 1:
                violations.append(
                    f"partition {region}: mixed gate types "
                    f"{sorted(g.name for g in gates)} (ops {indices})")
                continue
            gate = ops[0].gate
            if gate in (GateType.INIT0, GateType.INIT1):
                # Preset of an arbitrary cell set, provided it forms a grid
                # pattern (rows x cols cross product) so line drivers align.
                cells = {op.output for op in ops}
                rows = {r for r, _ in cells}
                cols = {c for _, c in cells}
                if len(cells) != len(rows) * len(cols):
                    violations.append(
                        f"partition {region}: INIT cells do not form a grid pattern")
                continue
            orientations = {op.orientation for op in ops}
            if len(orientations) > 1:
                violations.append(f"partition {region}: mixed orientations (ops {indices})")
                continue
            orientation = ops[0].orientation
            axis = 1 if orientation == IN_ROW else 0   # the aligned coordinate
            patterns = {(tuple(c[axis] for c in op.inputs), op.output[axis]) for op in ops}
            if len(patterns) > 1:
                what = "columns" if orientation == IN_ROW else "rows"
                violations.append(
                    f"partition {region}: in-{orientation} ops with unaligned "
                    f"input/output {what} (ops {indices})")

        # Rule 4: cell conflicts.
        writers: dict[Cell, int] = {}
        for i, op in enumerate(bundle.ops):
            if op.output in writers:
                violations.append(
                    f"ops {writers[op.output]} and {i} both write {op.output}")
            writers[op.output] = i
        for i, op in enumerate(bundle.ops):
            for cell in op.inputs:
                j = writers.get(cell)
                if j is not None and j != i:
                    violations.append(f"op {i} reads {cell} written by op {j}")

        return not violations, violations

    # --------------------------------------------------------------- execution

    def execute_bundle(self, bundle: CycleBundle, label: str = "main",
                       check: bool = True) -> None:
        """Apply one cycle: every op's output becomes its gate function.

        Reads happen before any write (legal bundles are conflict-free, so
        this matches any serial order). Adds one cycle and ``len(ops)`` gate
        executions to the stats.
        """
        if check:
            ok, violations = self.check_bundle(bundle)
            if not ok:
                raise SchedulingError("; ".join(violations))
        state = self.state
        rows, cols = state.shape
        results: list[tuple[Cell, int]] = []
        for op in bundle.ops:
            for r, c in op.cells():
                if not (0 <= r < rows and 0 <= c < cols):
                    raise AddressError(f"cell ({r},{c}) out of bounds")
            if self.config.strict_init:
                for r, c in op.inputs:
                    if not self.initialized[r, c]:
                        raise StrictInitError(
                            f"{op.gate.name} reads uninitialized cell ({r},{c})")
            values = tuple(int(state[r, c]) for r, c in op.inputs)
            results.append((op.output, gate_function(op.gate, values)))
        for (r, c), value in results:
            state[r, c] = value
            self.initialized[r, c] = 1
        self.stats.add_cycles(label, 1, len(bundle.ops))
        if self._trace is not None:
            self._emit_trace(bundle, label)

    def execute(self, bundles: Iterable[CycleBundle], label: str = "main",
                check: bool = True) -> None:
        for bundle in bundles:
            self.execute_bundle(bundle, label=label, check=check)

    # -------------------------------------------------------------- peripheral

    def _check_range(self, row_range: tuple[int, int], col_range: tuple[int, int]) -> None:
        r0, r1 = row_range
        c0, c1 = col_range
        if not (0 <= r0 < r1 <= self.config.rows and 0 <= c0 < c1 <= self.config.cols):
            raise AddressError(f"region rows {row_range} cols {col_range} out of bounds")

    def write_region(self, row_range: tuple[int, int], col_range: tuple[int, int],
                     bits: np.ndarray, label: str = "io") -> None:
        """Peripheral write; costs io cycles per row, no gate energy."""
        self._check_range(row_range, col_range)
        r0, r1 = row_range
        c0, c1 = col_range
        block = np.asarray(bits, dtype=np.uint8).reshape(r1 - r0, c1 - c0)
        self.state[r0:r1, c0:c1] = block
        self.initialized[r0:r1, c0:c1] = 1
        self.stats.add_cycles(label, (r1 - r0) * self.config.io_cycles_per_row, 0)

    def read_region(self, row_range: tuple[int, int], col_range: tuple[int, int],
                    label: str = "io") -> np.ndarray:
        """Peripheral read; costs io cycles per row, no gate energy."""
        self._check_range(row_range, col_range)
        r0, r1 = row_range
        c0, c1 = col_range
        if self.config.strict_init and not self.initialized[r0:r1, c0:c1].all():
            raise StrictInitError(f"region rows {row_range} cols {col_range} "
                                  "read before being written")
        self.stats.add_cycles(label, (r1 - r0) * self.config.io_cycles_per_row, 0)
        return self.state[r0:r1, c0:c1].copy()

    # ------------------------------------------------------------------- trace

    def _emit_trace(self, bundle: CycleBundle, label: str) -> None:
        record = {
            "cycle": self.stats.cycles,
            "label": label,
            "ops": [
                {
                    "partition": list(self.partition_map.region_of(
                        op.output, bundle.closed_switches)),
                    "gate": op.gate.name,
                    "orientation": op.orientation,
                    "inputs": [list(c) for c in op.inputs],
                    "output": list(op.output),
                }
                for op in bundle.ops
            ],
        }
        self._trace.write(json.dumps(record) + "\n")
