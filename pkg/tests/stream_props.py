"""Randomized macro-stream generator and bundled-vs-serial equivalence check.

Used by the scheduler unit tests and, at full volume, by the acceptance
suite: scheduled execution must leave the grid exactly as executing every
expanded micro-op one per cycle, and every emitted bundle must pass the
legality check.
"""

import random

import numpy as np

from sha3pim.crossbar import Crossbar, CrossbarConfig, CycleBundle, IN_COL, IN_ROW
from sha3pim.scheduler import SCRATCH_NEEDS, MacroKind, MacroOp, OpStream, expand, schedule

GRID = 16
KINDS = [MacroKind.XOR2, MacroKind.MUX, MacroKind.COPY, MacroKind.NOT,
         MacroKind.NOR2, MacroKind.NOR3, MacroKind.OR2, MacroKind.AND2,
         MacroKind.INIT0, MacroKind.INIT1]
NUM_INPUTS = {MacroKind.XOR2: 2, MacroKind.MUX: 3, MacroKind.COPY: 1,
              MacroKind.NOT: 1, MacroKind.NOR2: 2, MacroKind.NOR3: 3,
              MacroKind.OR2: 2, MacroKind.AND2: 2,
              MacroKind.INIT0: 0, MacroKind.INIT1: 0}


def small_crossbar() -> Crossbar:
    config = CrossbarConfig(rows=GRID, cols=GRID, horizontal_partitions=2,
                            vertical_partitions=2, unit_rows=8, unit_cols=8)
    return Crossbar(config)


def random_stream(rng: random.Random) -> OpStream:
    """Groups of independent macros on disjoint cells, barrier-separated."""
    stream = OpStream()
    for _ in range(rng.randint(1, 4)):
        used: set = set()
        for _ in range(rng.randint(1, 6)):
            macro = _place_macro(rng, used)
            if macro is not None:
                stream.append(macro)
        stream.barrier()
    return stream


def _place_macro(rng: random.Random, used: set) -> MacroOp | None:
    kind = rng.choice(KINDS)
    need = NUM_INPUTS[kind] + 1 + SCRATCH_NEEDS.get(kind, 0)
    orientation = rng.choice((IN_ROW, IN_COL))
    for _ in range(20):
        part_r, part_c = rng.randint(0, 1) * 8, rng.randint(0, 1) * 8
        if orientation == IN_ROW:
            line = part_r + rng.randint(0, 7)
            candidates = [(line, part_c + i) for i in range(8)]
        else:
            line = part_c + rng.randint(0, 7)
            candidates = [(part_r + i, line) for i in range(8)]
        free = [c for c in candidates if c not in used]
        if len(free) < need:
            continue
        cells = rng.sample(free, need)
        used.update(cells)
        n_in = NUM_INPUTS[kind]
        scratch = tuple(cells[n_in + 1:]) or None
        return MacroOp(kind, orientation, tuple(cells[:n_in]), cells[n_in],
                       scratch=scratch)
    return None


def check_equivalence(rng: random.Random) -> int:
    """One trial; returns the number of scheduled bundles."""
    stream = random_stream(rng)
    initial = np.array([[rng.randint(0, 1) for _ in range(GRID)]
                        for _ in range(GRID)], dtype=np.uint8)

    serial = small_crossbar()
    serial.state[:] = initial
    serial.initialized[:] = 1
    for group in stream.groups():
        for macro in group:
            for stage in expand(macro):
                for op in stage:
                    serial.execute_bundle(CycleBundle([op]), check=False)

    bundled = small_crossbar()
    bundled.state[:] = initial
    bundled.initialized[:] = 1
    program = schedule(stream, bundled.partition_map)
    for bundle, label in zip(program.bundles, program.labels):
        ok, violations = bundled.check_bundle(bundle)
        assert ok, f"illegal bundle emitted: {violations}"
        bundled.execute_bundle(bundle, label=label, check=False)

    assert np.array_equal(serial.state, bundled.state), \
        "scheduled execution diverged from serial execution"
    return len(program.bundles)
