"""Macro expansion, scratch allocation, and greedy bundle packing."""

import itertools
import random

import pytest

from sha3pim.crossbar import (
    IN_COL,
    IN_ROW,
    AllocationError,
    Crossbar,
    CrossbarConfig,
    CycleBundle,
    GateType,
)
from sha3pim.scheduler import (
    MacroKind,
    MacroOp,
    OpStream,
    ScratchPool,
    ShapeError,
    expand,
    schedule,
)
from stream_props import check_equivalence, small_crossbar


def run_macro(kind, values, scratch_cells=2):
    """Execute one macro's expansion on a fresh grid; return the output bit."""
    xbar = small_crossbar()
    n = len(values)
    inputs = tuple((0, i + 1) for i in range(n))
    for cell, v in zip(inputs, values):
        xbar.state[cell] = v
        xbar.initialized[cell] = 1
    need = {MacroKind.XOR2: 3, MacroKind.MUX: 3, MacroKind.COPY: 1}.get(kind, 0)
    scratch = tuple((0, 4 + i) for i in range(need)) or None
    macro = MacroOp(kind, IN_ROW, inputs, (0, 0), scratch=scratch)
    for stage in expand(macro):
        for op in stage:
            xbar.execute_bundle(CycleBundle([op]), check=False)
    return int(xbar.state[0, 0])


def test_xor2_truth_table():
    for a, b in itertools.product((0, 1), repeat=2):
        assert run_macro(MacroKind.XOR2, (a, b)) == a ^ b


def test_mux_truth_table():
    # inputs are (select, a, b): select=1 picks a, select=0 picks b
    for s, a, b in itertools.product((0, 1), repeat=3):
        assert run_macro(MacroKind.MUX, (s, a, b)) == (a if s else b)


def test_copy_truth_table():
    for v in (0, 1):
        assert run_macro(MacroKind.COPY, (v,)) == v


def test_primitives_pass_through_with_preset():
    stages = expand(MacroOp(MacroKind.NOR2, IN_ROW, ((0, 1), (0, 2)), (0, 0)))
    assert len(stages) == 2
    assert stages[0][0].gate == GateType.INIT1
    assert stages[1][0].gate == GateType.NOR2


def test_macro_validation():
    with pytest.raises(ShapeError):
        expand(MacroOp(MacroKind.MUX, IN_ROW, ((0, 1), (0, 2)), (0, 0)))
    with pytest.raises(ShapeError):
        # cells share neither a row nor a column
        expand(MacroOp(MacroKind.NOT, IN_ROW, ((0, 1),), (1, 2)))


def test_scratch_pool_allocates_and_resets():
    pool = ScratchPool(columns=[10, 11, 12])
    macro = MacroOp(MacroKind.XOR2, IN_ROW, ((0, 1), (0, 2)), (0, 0))
    stages = expand(macro, pool)
    scratch = {op.output for op in stages[0]} - {(0, 0)}
    assert scratch == {(0, 10), (0, 11), (0, 12)}
    # identical pattern on another row reuses the same columns
    macro2 = MacroOp(MacroKind.XOR2, IN_ROW, ((5, 1), (5, 2)), (5, 0))
    stages2 = expand(macro2, pool)
    assert {op.output for op in stages2[0]} - {(5, 0)} == {(5, 10), (5, 11), (5, 12)}
    # a different pattern needs fresh columns and exhausts the pool
    macro3 = MacroOp(MacroKind.XOR2, IN_ROW, ((0, 2), (0, 3)), (0, 1))
    with pytest.raises(AllocationError):
        expand(macro3, pool)
    pool.reset()
    expand(macro3, pool)


def test_single_not_schedules_as_two_bundles():
    xbar = small_crossbar()
    stream = OpStream()
    stream.append(MacroOp(MacroKind.NOT, IN_ROW, ((0, 1),), (0, 0)))
    program = schedule(stream, xbar.partition_map)
    assert len(program.bundles) == 2
    assert program.bundles[0].ops[0].gate == GateType.INIT1
    assert program.bundles[1].ops[0].gate == GateType.NOT


def test_column_parallel_xor_collapses():
    # 25 in-column XOR2 macros with one shared row pattern pack into
    # 4 logic bundles + 1 preset bundle, not 25x that.
    xbar = Crossbar(CrossbarConfig(rows=64, cols=64, horizontal_partitions=1,
                                   vertical_partitions=1, unit_rows=64,
                                   unit_cols=64))
    stream = OpStream()
    for c in range(25):
        stream.append(MacroOp(MacroKind.XOR2, IN_COL, ((1, c), (2, c)), (3, c),
                              scratch=((4, c), (5, c), (6, c))))
    program = schedule(stream, xbar.partition_map)
    assert len(program.bundles) == 5
    xbar.initialized[:] = 1
    for bundle in program.bundles:
        xbar.execute_bundle(bundle)
    assert xbar.stats.cycles == 5


def test_barrier_orders_dependent_macros():
    xbar = small_crossbar()
    stream = OpStream()
    stream.append(MacroOp(MacroKind.XOR2, IN_ROW, ((0, 1), (0, 2)), (0, 0),
                          scratch=((0, 4), (0, 5), (0, 6))))
    stream.barrier()
    stream.append(MacroOp(MacroKind.XOR2, IN_ROW, ((0, 0), (0, 3)), (0, 7),
                          scratch=((0, 4), (0, 5), (0, 6))))
    program = schedule(stream, xbar.partition_map)
    # second macro strictly after the first's last bundle: 5 + 5 cycles
    assert len(program.bundles) == 10
    first_write = next(i for i, b in enumerate(program.bundles)
                       if any(op.output == (0, 0) and op.gate != GateType.INIT1
                              for op in b.ops))
    first_read = next(i for i, b in enumerate(program.bundles)
                      if any((0, 0) in op.inputs for op in b.ops))
    assert first_read > first_write


def test_row_replicated_macros_share_bundles():
    xbar = small_crossbar()
    stream = OpStream()
    for r in range(8):
        stream.append(MacroOp(MacroKind.XOR2, IN_ROW, ((r, 1), (r, 2)), (r, 0),
                              scratch=((r, 4), (r, 5), (r, 6))))
    program = schedule(stream, xbar.partition_map)
    assert len(program.bundles) == 5   # presets + OR2 + AND2 + NOT + AND2


def test_mixed_labels_in_group_rejected():
    from sha3pim.crossbar import SchedulingError
    stream = OpStream()
    stream.append(MacroOp(MacroKind.NOT, IN_ROW, ((0, 1),), (0, 0), label="a"))
    stream.append(MacroOp(MacroKind.NOT, IN_ROW, ((1, 1),), (1, 0), label="b"))
    xbar = small_crossbar()
    with pytest.raises(SchedulingError):
        schedule(stream, xbar.partition_map)


def test_randomized_equivalence_sample():
    rng = random.Random(2024)
    for _ in range(150):
        check_equivalence(rng)
