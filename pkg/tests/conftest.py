import random

import pytest

from sha3pim.crossbar import Crossbar, CrossbarConfig
from sha3pim.keccak_xbar import (
    compiled_keccak,
    lanes_to_bits,
    bits_to_lanes,
    read_unit_state,
    write_unit_state,
)


@pytest.fixture(scope="session")
def compiled():
    """Compiled microcode for the default 1024x1024 / 27x14 crossbar."""
    return compiled_keccak(CrossbarConfig())


@pytest.fixture()
def prepared_xbar(compiled):
    xbar = Crossbar(CrossbarConfig())
    compiled.layout.setup_shared_blocks(xbar)
    return xbar


class StepRunner:
    """Drives single compiled permutation steps on unit 0."""

    def __init__(self, compiled):
        self.compiled = compiled
        self.xbar = Crossbar(CrossbarConfig())
        compiled.layout.setup_shared_blocks(self.xbar)
        self.deltas = compiled.deltas_for([0])
        self.unit = compiled.layout.unit(0)

    def set_offsets(self, offsets):
        self.compiled.layout.setup_shared_blocks(self.xbar, offsets=offsets)

    def run(self, step, lanes, round_index=0):
        from sha3pim import engine
        write_unit_state(self.xbar, self.unit, lanes_to_bits(lanes))
        program = self.compiled.step_program(step, round_index=round_index)
        engine.replay(program, self.xbar, self.deltas)
        return bits_to_lanes(read_unit_state(self.xbar, self.unit))


@pytest.fixture(scope="session")
def step_runner(compiled):
    return StepRunner(compiled)


def random_lanes(rng: random.Random) -> list[int]:
    return [rng.getrandbits(64) for _ in range(25)]
