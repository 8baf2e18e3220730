"""SHA3-256 as crossbar microcode: state mapping, step generators, driver.

Each hash unit is one 72x37 partition. The 5x5x64 state maps onto a 25x64
cell block: lane (x, y) lives in column ``5x + y`` and bit z in row z, so
plane-wise XORs run row-parallel and lane rotations run column-parallel.
The 12 columns right of the state hold the theta intermediates (C, D), one
spare lane and one scratch column; the 8 rows below it hold the rotation
select bits and the in-column scratch rows.

Rotation offsets sit bit-sliced in a shared ROT block under the bottom
partition row (one copy per column of units) and the round constants in a
shared RC block right of the last partition column (one copy per row of
units); both are copied into a unit over the partition switches, one
double-inverting hop per unit, once per use.

Microcode is generated for a reference unit, packed by the scheduler,
checked once, and frozen; hashing replays the frozen program on every
active unit in lockstep (`engine`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .crossbar import (
    IN_COL,
    IN_ROW,
    CapacityError,
    Crossbar,
    CrossbarConfig,
    ExecutionStats,
    PartitionMap,
)
from .scheduler import MacroKind, MacroOp, OpStream, schedule

LANE_BITS = 64
STATE_COLS = 25

# FIPS-202 rotation offsets r[x][y] and round constants RC[0..23].
ROTATION_OFFSETS = [
    [0, 36, 3, 41, 18],
    [1, 44, 10, 45, 2],
    [62, 6, 43, 15, 61],
    [28, 55, 25, 21, 56],
    [27, 20, 39, 8, 14],
]

ROUND_CONSTANTS = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]


@dataclass(frozen=True)
class KeccakParams:
    """Sponge geometry for SHA3-256."""

    state_bits: int = 1600      # b
    rate_bits: int = 1088       # r
    capacity_bits: int = 512    # c
    lane_bits: int = 64         # w
    rounds: int = 24
    digest_bits: int = 256

    def __post_init__(self):
        if self.state_bits != self.rate_bits + self.capacity_bits:
            raise ValueError("state bits must equal rate + capacity")
        if self.state_bits != 25 * self.lane_bits:
            raise ValueError("state bits must equal 25 lanes")
        if self.digest_bits > self.rate_bits:
            raise ValueError("digest cannot exceed the rate")

    @property
    def rate_bytes(self) -> int:
        return self.rate_bits // 8

    @property
    def rate_lanes(self) -> int:
        return self.rate_bits // self.lane_bits


KECCAK = KeccakParams()


def _pi_cycle() -> list[tuple[int, int]]:
    """The single 24-lane cycle of (x, y) -> (y, 2x+3y); (0,0) is fixed."""
    cycle = [(1, 0)]
    while True:
        x, y = cycle[-1]
        nxt = (y, (2 * x + 3 * y) % 5)
        if nxt == cycle[0]:
            return cycle
        cycle.append(nxt)


PI_CYCLE = _pi_cycle()


# ----------------------------------------------------------------- the layout

class UnitLayout:
    """Address map of one 72x37 hash unit."""

    ROWS = 72
    COLS = 37

    def __init__(self, origin: tuple[int, int] = (0, 0)):
        self.origin = origin

    def row(self, z: int) -> int:
        return self.origin[0] + z

    def lane_col(self, x: int, y: int) -> int:
        return self.origin[1] + 5 * x + y

    def c_col(self, x: int) -> int:          # theta C[x]
        return self.origin[1] + 25 + x

    def d_col(self, x: int) -> int:          # theta D[x]
        return self.origin[1] + 30 + x

    @property
    def x_col(self) -> int:                  # spare lane (pi staging, chi, RC hop)
        return self.origin[1] + 35

    @property
    def m_col(self) -> int:                  # scratch column (RC local copy)
        return self.origin[1] + 36

    @property
    def t_row(self) -> int:                  # rotation select bits
        return self.origin[0] + 64

    @property
    def tn_row(self) -> int:                 # inverted select bits
        return self.origin[0] + 65

    @property
    def p_row(self) -> int:                  # rotation partial a & t
        return self.origin[0] + 66

    @property
    def q_row(self) -> int:                  # rotation partial b & ~t
        return self.origin[0] + 67

    @property
    def s_row(self) -> int:                  # redundant slice (chain stash)
        return self.origin[0] + 68

    @property
    def a_row(self) -> int:                  # hop/shift intermediate
        return self.origin[0] + 69

    @property
    def b_row(self) -> int:
        return self.origin[0] + 70

    def stage_col(self, k: int) -> int:
        """Columns used to stage message lanes during absorption (C then D)."""
        if not 0 <= k < 10:
            raise ValueError("only 10 staging columns exist")
        return self.origin[1] + 25 + k


class CrossbarLayout:
    """Unit tiling plus the shared ROT/RC block placement for one crossbar."""

    ROT_PLANES = 6   # offsets are 6-bit

    def __init__(self, config: CrossbarConfig):
        if config.unit_rows != UnitLayout.ROWS or config.unit_cols != UnitLayout.COLS:
            raise ValueError(f"hash units are {UnitLayout.ROWS}x{UnitLayout.COLS}")
        self.config = config
        self.vparts = config.vertical_partitions
        self.hparts = config.horizontal_partitions
        self.rot_base_row = self.vparts * config.unit_rows
        self.rc_base_col = self.hparts * config.unit_cols
        if self.rot_base_row + self.ROT_PLANES > config.rows:
            raise ValueError("no room for the shared ROT block below the units")
        if self.rc_base_col + len(ROUND_CONSTANTS) > config.cols:
            raise ValueError("no room for the shared RC block right of the units")

    @property
    def num_units(self) -> int:
        return self.vparts * self.hparts

    def unit_origin(self, unit_id: int) -> tuple[int, int]:
        v, h = divmod(unit_id, self.hparts)
        return (v * self.config.unit_rows, h * self.config.unit_cols)

    def unit(self, unit_id: int) -> UnitLayout:
        if not 0 <= unit_id < self.num_units:
            raise ValueError(f"unit {unit_id} out of range")
        return UnitLayout(self.unit_origin(unit_id))

    def row_switch(self, vpart: int) -> tuple[str, int]:
        return ("row", vpart * self.config.unit_rows)

    def col_switch(self, hpart: int) -> tuple[str, int]:
        return ("col", hpart * self.config.unit_cols)

    # shared-block cells (absolute)

    def rot_cell(self, plane: int, x: int, y: int, hpart: int = 0) -> tuple[int, int]:
        return (self.rot_base_row + plane,
                hpart * self.config.unit_cols + 5 * x + y)

    def rc_col(self, round_index: int) -> int:
        return self.rc_base_col + round_index

    def describe(self) -> dict:
        """Structured dump of the address map and constants (debugging aid)."""
        unit = UnitLayout((0, 0))
        return {
            "crossbar": {"rows": self.config.rows, "cols": self.config.cols,
                         "partitions": [self.vparts, self.hparts],
                         "units": self.num_units},
            "unit": {
                "rows": UnitLayout.ROWS, "cols": UnitLayout.COLS,
                "state": "lane (x,y) -> col 5x+y, bit z -> row z",
                "theta_c_cols": [unit.c_col(x) for x in range(5)],
                "theta_d_cols": [unit.d_col(x) for x in range(5)],
                "spare_lane_col": unit.x_col,
                "scratch_col": unit.m_col,
                "select_rows": [unit.t_row, unit.tn_row],
                "mux_partial_rows": [unit.p_row, unit.q_row],
                "redundant_slice_row": unit.s_row,
                "hop_rows": [unit.a_row, unit.b_row],
            },
            "shared_rot_block": {"rows": [self.rot_base_row,
                                          self.rot_base_row + self.ROT_PLANES],
                                 "copies": self.hparts,
                                 "offsets": ROTATION_OFFSETS},
            "shared_rc_block": {"cols": [self.rc_base_col,
                                         self.rc_base_col + len(ROUND_CONSTANTS)],
                                "copies": self.vparts,
                                "round_constants": [f"0x{rc:016x}"
                                                    for rc in ROUND_CONSTANTS]},
        }

    def setup_shared_blocks(self, xbar: Crossbar,
                            offsets: list[list[int]] | None = None) -> None:
        """Write the ROT bit-planes and RC constants (peripheral io)."""
        offsets = offsets if offsets is not None else ROTATION_OFFSETS
        rot = np.zeros((self.ROT_PLANES, STATE_COLS), dtype=np.uint8)
        for x in range(5):
            for y in range(5):
                for j in range(self.ROT_PLANES):
                    rot[j, 5 * x + y] = (offsets[x][y] >> j) & 1
        for h in range(self.hparts):
            c0 = h * self.config.unit_cols
            xbar.write_region((self.rot_base_row, self.rot_base_row + self.ROT_PLANES),
                              (c0, c0 + STATE_COLS), rot)
        rc = np.zeros((LANE_BITS, len(ROUND_CONSTANTS)), dtype=np.uint8)
        for i, value in enumerate(ROUND_CONSTANTS):
            for z in range(LANE_BITS):
                rc[z, i] = (value >> z) & 1
        for v in range(self.vparts):
            r0 = v * self.config.unit_rows
            xbar.write_region((r0, r0 + LANE_BITS),
                              (self.rc_base_col, self.rc_base_col + len(ROUND_CONSTANTS)),
                              rc)


# ------------------------------------------------------- state/bit conversions

def lanes_to_bits(lanes: list[int]) -> np.ndarray:
    """25 lane words -> 64x25 cell bits (bit z of lane (x,y) at [z, 5x+y])."""
    bits = np.zeros((LANE_BITS, STATE_COLS), dtype=np.uint8)
    for x in range(5):
        for y in range(5):
            word = lanes[x + 5 * y]
            col = 5 * x + y
            for z in range(LANE_BITS):
                bits[z, col] = (word >> z) & 1
    return bits


def bits_to_lanes(bits: np.ndarray) -> list[int]:
    lanes = [0] * 25
    weights = 1 << np.arange(LANE_BITS, dtype=np.uint64)
    for x in range(5):
        for y in range(5):
            col = bits[:, 5 * x + y].astype(np.uint64)
            lanes[x + 5 * y] = int((col * weights).sum())
    return lanes


def write_unit_state(xbar: Crossbar, unit: UnitLayout, bits: np.ndarray) -> None:
    r0, c0 = unit.origin
    xbar.write_region((r0, r0 + LANE_BITS), (c0, c0 + STATE_COLS), bits)


def read_unit_state(xbar: Crossbar, unit: UnitLayout) -> np.ndarray:
    r0, c0 = unit.origin
    return xbar.read_region((r0, r0 + LANE_BITS), (c0, c0 + STATE_COLS))


# ------------------------------------------------------------------- messages

def pad_message(message: bytes, params: KeccakParams = KECCAK) -> list[bytes]:
    """Split ``message`` into rate-sized blocks with SHA-3 pad10*1 applied."""
    padded = bytearray(message)
    padded.append(0x06)
    while len(padded) % params.rate_bytes:
        padded.append(0x00)
    padded[-1] |= 0x80
    return [bytes(padded[i:i + params.rate_bytes])
            for i in range(0, len(padded), params.rate_bytes)]


def block_to_bits(block: bytes, params: KeccakParams = KECCAK) -> np.ndarray:
    """One rate block -> [rate_lanes, 64] bit array in lane order."""
    bits = np.unpackbits(np.frombuffer(block, dtype=np.uint8), bitorder="little")
    return bits.reshape(params.rate_lanes, params.lane_bits)


def block_state_bits(block: bytes, params: KeccakParams = KECCAK) -> np.ndarray:
    """One rate block -> full 64x25 state bits (capacity lanes zero)."""
    bits = np.zeros((LANE_BITS, STATE_COLS), dtype=np.uint8)
    lane_bits = block_to_bits(block, params)
    for lane in range(params.rate_lanes):
        x, y = lane % 5, lane // 5
        bits[:, 5 * x + y] = lane_bits[lane]
    return bits


# --------------------------------------------------------- microcode helpers

def _xor_inplace(stream: OpStream, rows: list[int], a_col: int, b_col: int,
                 u_col: int, v_col: int, label: str) -> None:
    """a ^= b across ``rows`` via NOR/AND/NOR (3 gates, 2 scratch columns)."""
    for z in rows:
        stream.append(MacroOp(MacroKind.NOR2, IN_ROW, ((z, a_col), (z, b_col)),
                              (z, u_col), label))
        stream.append(MacroOp(MacroKind.AND2, IN_ROW, ((z, a_col), (z, b_col)),
                              (z, v_col), label))
    stream.barrier()
    for z in rows:
        stream.append(MacroOp(MacroKind.NOR2, IN_ROW, ((z, u_col), (z, v_col)),
                              (z, a_col), label))
    stream.barrier()


def _copy_col(stream: OpStream, rows: list[int], src_col: int, dst_col: int,
              tmp_col: int, label: str) -> None:
    for z in rows:
        stream.append(MacroOp(MacroKind.COPY, IN_ROW, ((z, src_col),),
                              (z, dst_col), label, scratch=((z, tmp_col),)))
    stream.barrier()


# ------------------------------------------------------------ step generators

def theta_microcode(unit: UnitLayout) -> OpStream:
    """C[x] = xor of plane columns; D[x] = C[x-1] ^ (C[x+1] <<< 1); A ^= D."""
    s = OpStream()
    label = "theta"
    rows = [unit.row(z) for z in range(LANE_BITS)]
    m, xc = unit.m_col, unit.x_col

    # Five-column XOR reduction into C[x], chained through the scratch
    # columns; D columns serve as the XOR macro scratch while still free.
    for x in range(5):
        cols = [unit.lane_col(x, y) for y in range(5)]
        chain = [(cols[0], cols[1], m), (m, cols[2], xc),
                 (xc, cols[3], m), (m, cols[4], unit.c_col(x))]
        for a, b, out in chain:
            for z in rows:
                s.append(MacroOp(MacroKind.XOR2, IN_ROW, ((z, a), (z, b)), (z, out),
                                 label, scratch=((z, unit.d_col(0)),
                                                 (z, unit.d_col(1)),
                                                 (z, unit.d_col(2)))))
            s.barrier()

    # D[x] <- not C[x+1] (row-parallel copies, inverted once)
    for x in range(5):
        for z in rows:
            s.append(MacroOp(MacroKind.NOT, IN_ROW, ((z, unit.c_col((x + 1) % 5)),),
                             (z, unit.d_col(x)), label))
    s.barrier()

    # Rotate the D columns by one row (in-column). The top bit is stashed
    # through two spare rows (double inversion), then a descending pass
    # shifts in place; each NOT also undoes the inversion from the copy.
    dcols = [unit.d_col(x) for x in range(5)]
    for c in dcols:
        s.append(MacroOp(MacroKind.NOT, IN_COL, ((unit.row(63), c),),
                         (unit.a_row, c), label))
    s.barrier()
    for c in dcols:
        s.append(MacroOp(MacroKind.NOT, IN_COL, ((unit.a_row, c),),
                         (unit.b_row, c), label))
    s.barrier()
    for z in range(63, 0, -1):
        for c in dcols:
            s.append(MacroOp(MacroKind.NOT, IN_COL, ((unit.row(z - 1), c),),
                             (unit.row(z), c), label))
        s.barrier()
    for c in dcols:
        s.append(MacroOp(MacroKind.NOT, IN_COL, ((unit.b_row, c),),
                         (unit.row(0), c), label))
    s.barrier()

    # D[x] ^= C[x-1], then every lane ^= its D column.
    for x in range(5):
        _xor_inplace(s, rows, unit.d_col(x), unit.c_col((x - 1) % 5), xc, m, label)
    for x in range(5):
        for y in range(5):
            _xor_inplace(s, rows, unit.lane_col(x, y), unit.d_col(x), xc, m, label)
    return s


def variable_rotate(unit: UnitLayout, lane_cols: list[int],
                    label: str = "rho") -> list[OpStream]:
    """Data-dependent cyclic rotation of whole lanes, one stream per level.

    Level j muxes every lane between itself and itself shifted by 2^j rows,
    selected by bit j of that lane's offset (already fetched into the select
    row). The shift-by-2^j permutation splits into 2^j cyclic chains which
    execute serially: each chain stashes its first destination's source
    into the redundant slice row, then walks destinations in source order,
    computing both mux partials in spare rows before overwriting in place.
    """
    streams = []
    t, tn, p, q, sr = unit.t_row, unit.tn_row, unit.p_row, unit.q_row, unit.s_row
    for j in range(6):
        s = OpStream()
        for c in lane_cols:
            s.append(MacroOp(MacroKind.NOT, IN_COL, ((t, c),), (tn, c), label))
        s.barrier()
        step = 1 << j
        for start in range(step):
            for c in lane_cols:
                s.append(MacroOp(MacroKind.NOT, IN_COL, ((unit.row(start), c),),
                                 (sr, c), label))
            s.barrier()
            length = LANE_BITS // step
            for k in range(length):
                dest = (start - k * step) % LANE_BITS
                src = unit.row((dest - step) % LANE_BITS)
                last = k == length - 1
                for c in lane_cols:
                    if last:
                        # source bit was overwritten first; use its stashed
                        # complement: a & t == NOR(~a, ~t)
                        s.append(MacroOp(MacroKind.NOR2, IN_COL,
                                         ((sr, c), (tn, c)), (p, c), label))
                    else:
                        s.append(MacroOp(MacroKind.AND2, IN_COL,
                                         ((src, c), (t, c)), (p, c), label))
                    s.append(MacroOp(MacroKind.AND2, IN_COL,
                                     ((unit.row(dest), c), (tn, c)), (q, c), label))
                s.barrier()
                for c in lane_cols:
                    s.append(MacroOp(MacroKind.OR2, IN_COL, ((p, c), (q, c)),
                                     (unit.row(dest), c), label))
                s.barrier()
        streams.append(s)
    return streams


def rho_lane_cols(unit: UnitLayout) -> list[int]:
    return [unit.lane_col(x, y) for x in range(5) for y in range(5)]


def pi_microcode(unit: UnitLayout) -> OpStream:
    """Walk the 24-lane permutation cycle through the spare lane column."""
    s = OpStream()
    label = "pi"
    rows = [unit.row(z) for z in range(LANE_BITS)]
    cols = [unit.lane_col(x, y) for x, y in PI_CYCLE]
    _copy_col(s, rows, cols[0], unit.x_col, unit.m_col, label)
    _copy_col(s, rows, cols[-1], cols[0], unit.m_col, label)
    for k in range(len(cols) - 1, 1, -1):
        _copy_col(s, rows, cols[k - 1], cols[k], unit.m_col, label)
    _copy_col(s, rows, unit.x_col, cols[1], unit.m_col, label)
    return s


def chi_microcode(unit: UnitLayout) -> OpStream:
    """Per plane: invert the five lanes, then A[x] ^= ~A[x+1] & A[x+2]."""
    s = OpStream()
    label = "chi"
    rows = [unit.row(z) for z in range(LANE_BITS)]
    for y in range(5):
        for x in range(5):
            for z in rows:
                s.append(MacroOp(MacroKind.NOT, IN_ROW, ((z, unit.lane_col(x, y)),),
                                 (z, unit.c_col(x)), label))
        s.barrier()
        for x in range(5):
            # the inverted copies preserve this plane's pre-step values
            for z in rows:
                s.append(MacroOp(MacroKind.NOT, IN_ROW,
                                 ((z, unit.c_col((x + 2) % 5)),),
                                 (z, unit.m_col), label))
            s.barrier()
            for z in rows:
                s.append(MacroOp(MacroKind.AND2, IN_ROW,
                                 ((z, unit.c_col((x + 1) % 5)), (z, unit.m_col)),
                                 (z, unit.x_col), label))
            s.barrier()
            _xor_inplace(s, rows, unit.lane_col(x, y), unit.x_col,
                         unit.d_col(0), unit.m_col, label)
    return s


def iota_local_microcode(unit: UnitLayout) -> OpStream:
    """XOR the fetched round constant (in the scratch column) into A[0][0]."""
    s = OpStream()
    rows = [unit.row(z) for z in range(LANE_BITS)]
    _xor_inplace(s, rows, unit.lane_col(0, 0), unit.m_col,
                 unit.x_col, unit.d_col(0), "iota")
    return s


def absorb_microcode(unit: UnitLayout, lanes: list[int], base: int) -> OpStream:
    """XOR staged message lanes (staging column base+k) into the state."""
    s = OpStream()
    rows = [unit.row(z) for z in range(LANE_BITS)]
    for k, lane in enumerate(lanes):
        x, y = lane % 5, lane // 5
        _xor_inplace(s, rows, unit.lane_col(x, y), unit.stage_col(base + k),
                     unit.x_col, unit.m_col, "io")
    return s


# ------------------------------------------------------------- shared fetches

def rot_fetch_microcode(layout: CrossbarLayout, plane: int) -> OpStream:
    """Copy offset bit-plane ``plane`` up the chain of vertically aligned
    units (reference column of units; replicated per active unit column).

    Each hop is a double inversion through the hop row, crossing one closed
    row switch, so every unit receives the true bit values.
    """
    s = OpStream()
    label = "rho"
    cols = list(range(STATE_COLS))
    units = [UnitLayout((v * UnitLayout.ROWS, 0)) for v in range(layout.vparts)]

    def hop(src_row: int, dst: UnitLayout, switch=None) -> None:
        switches = frozenset([switch]) if switch else frozenset()
        for c in cols:
            s.append(MacroOp(MacroKind.NOT, IN_COL, ((src_row, c),),
                             (dst.a_row, c), label, switches=switches))
        s.barrier()
        for c in cols:
            s.append(MacroOp(MacroKind.NOT, IN_COL, ((dst.a_row, c),),
                             (dst.t_row, c), label))
        s.barrier()

    bottom = layout.vparts - 1
    hop(layout.rot_base_row + plane, units[bottom])
    for v in range(bottom - 1, -1, -1):
        hop(units[v + 1].t_row, units[v], switch=layout.row_switch(v + 1))
    return s


def rc_fetch_microcode(layout: CrossbarLayout, round_index: int) -> OpStream:
    """Copy RC[round] leftward along a row of units into each scratch column."""
    s = OpStream()
    label = "iota"
    units = [UnitLayout((0, h * UnitLayout.COLS)) for h in range(layout.hparts)]
    rows = list(range(LANE_BITS))

    def hop(src_col: int, dst: UnitLayout, switch=None) -> None:
        switches = frozenset([switch]) if switch else frozenset()
        for z in rows:
            s.append(MacroOp(MacroKind.NOT, IN_ROW, ((z, src_col),),
                             (z, dst.x_col), label, switches=switches))
        s.barrier()
        for z in rows:
            s.append(MacroOp(MacroKind.NOT, IN_ROW, ((z, dst.x_col),),
                             (z, dst.m_col), label))
        s.barrier()

    rightmost = layout.hparts - 1
    hop(layout.rc_col(round_index), units[rightmost])
    for h in range(rightmost - 1, -1, -1):
        hop(units[h + 1].m_col, units[h], switch=layout.col_switch(h + 1))
    return s


# ------------------------------------------------------------------ compiler

_ABSORB_BATCHES = ([0, 1, 2, 3, 4, 5, 6, 7, 8, 9], [10, 11, 12, 13, 14, 15, 16])


class CompiledKeccak:
    """Frozen microcode for one crossbar geometry, replayable on any units."""

    def __init__(self, config: CrossbarConfig):
        self.config = config
        self.layout = CrossbarLayout(config)
        self.partition_map = PartitionMap.from_config(config)
        ref = UnitLayout((0, 0))
        self.ref_unit = ref

        def compiled(stream: OpStream, set_id: int) -> engine.FrozenProgram:
            program = schedule(stream, self.partition_map, verify=True)
            return engine.freeze(program.bundles, program.labels,
                                 [set_id] * len(program.bundles), config.cols)

        unit_set = engine.SET_UNIT
        body = [compiled(theta_microcode(ref), unit_set)]
        for j, core in enumerate(variable_rotate(ref, rho_lane_cols(ref))):
            body.append(compiled(rot_fetch_microcode(self.layout, j),
                                 engine.SET_PARTITION_COL))
            body.append(compiled(core, unit_set))
        body.append(compiled(pi_microcode(ref), unit_set))
        body.append(compiled(chi_microcode(ref), unit_set))
        round_body = engine.concat(body)

        iota_local = compiled(iota_local_microcode(ref), unit_set)
        rounds = []
        for round_index in range(KECCAK.rounds):
            rounds.append(round_body)
            rounds.append(compiled(rc_fetch_microcode(self.layout, round_index),
                                   engine.SET_PARTITION_ROW))
            rounds.append(iota_local)
        self.permute = engine.concat(rounds)

        self.absorb = [
            compiled(absorb_microcode(ref, lanes, base=0), unit_set)
            for lanes in _ABSORB_BATCHES
        ]
        self._compiled = compiled
        self._step_cache: dict[tuple, engine.FrozenProgram] = {}

    def step_program(self, step: str, round_index: int = 0) -> engine.FrozenProgram:
        """Frozen microcode for a single permutation step (testing aid)."""
        key = (step, round_index if step == "iota" else 0)
        if key in self._step_cache:
            return self._step_cache[key]
        ref = self.ref_unit
        unit_set = engine.SET_UNIT
        if step == "theta":
            program = self._compiled(theta_microcode(ref), unit_set)
        elif step == "rho":
            parts = []
            for j, core in enumerate(variable_rotate(ref, rho_lane_cols(ref))):
                parts.append(self._compiled(rot_fetch_microcode(self.layout, j),
                                            engine.SET_PARTITION_COL))
                parts.append(self._compiled(core, unit_set))
            program = engine.concat(parts)
        elif step == "pi":
            program = self._compiled(pi_microcode(ref), unit_set)
        elif step == "chi":
            program = self._compiled(chi_microcode(ref), unit_set)
        elif step == "iota":
            if not 0 <= round_index < KECCAK.rounds:
                raise ValueError(f"round index {round_index} out of range")
            program = engine.concat([
                self._compiled(rc_fetch_microcode(self.layout, round_index),
                               engine.SET_PARTITION_ROW),
                self._compiled(iota_local_microcode(ref), unit_set),
            ])
        elif step == "rotate":
            # same as rho; named separately because the ROT block may hold
            # arbitrary offsets rather than the fixed table
            return self.step_program("rho")
        else:
            raise ValueError(f"unknown step {step!r}")
        self._step_cache[key] = program
        return program

    # ------------------------------------------------------------- replay glue

    def deltas_for(self, unit_ids: list[int]) -> list[np.ndarray]:
        cols = self.config.cols
        origins = [self.layout.unit_origin(u) for u in unit_ids]
        unit_deltas = np.array([r * cols + c for r, c in origins], dtype=np.int64)
        vparts = sorted({u // self.layout.hparts for u in unit_ids})
        hparts = sorted({u % self.layout.hparts for u in unit_ids})
        row_deltas = np.array([v * self.config.unit_rows * cols for v in vparts],
                              dtype=np.int64)
        col_deltas = np.array([h * self.config.unit_cols for h in hparts],
                              dtype=np.int64)
        return [unit_deltas, row_deltas, col_deltas]

    def run_permute(self, xbar: Crossbar, deltas: list[np.ndarray],
                    trace=None) -> None:
        engine.replay(self.permute, xbar, deltas, trace=trace)

    def run_absorb(self, xbar: Crossbar, unit_ids: list[int],
                   deltas: list[np.ndarray], lane_bits: np.ndarray,
                   trace=None) -> None:
        """Stage one rate block per unit (io) and XOR it into the states.

        ``lane_bits[i]`` is the [rate_lanes, 64] bit array for unit i.
        """
        for batch, program in zip(_ABSORB_BATCHES, self.absorb):
            for i, unit_id in enumerate(unit_ids):
                unit = self.layout.unit(unit_id)
                r0 = unit.row(0)
                c0 = unit.stage_col(0)
                block = lane_bits[i][batch].T       # rows=bits, cols=lanes
                xbar.write_region((r0, r0 + LANE_BITS), (c0, c0 + len(batch)), block)
            engine.replay(program, xbar, deltas, trace=trace)


_compiled_cache: dict[tuple, CompiledKeccak] = {}


def compiled_keccak(config: CrossbarConfig | None = None) -> CompiledKeccak:
    config = config or CrossbarConfig()
    key = (config.rows, config.cols, config.horizontal_partitions,
           config.vertical_partitions, config.unit_rows, config.unit_cols)
    if key not in _compiled_cache:
        _compiled_cache[key] = CompiledKeccak(config)
    return _compiled_cache[key]


# -------------------------------------------------------------------- hashing

def _digest_from_state(bits: np.ndarray, params: KeccakParams) -> bytes:
    lanes = bits_to_lanes(bits)
    raw = b"".join(lanes[lane].to_bytes(8, "little")
                   for lane in range(params.digest_bits // params.lane_bits))
    return raw[:params.digest_bits // 8]


def plan_cohorts(block_counts: list[int], units_per_crossbar: int) -> list[list[int]]:
    """Group message indices into equal-block-count lockstep cohorts.

    A cohort shares one crossbar run (one unit per message), so it is
    capped at the unit count and all of its messages must need the same
    number of permutations.
    """
    order = sorted(range(len(block_counts)), key=lambda i: block_counts[i])
    cohorts: list[list[int]] = []
    for i in order:
        if cohorts and block_counts[cohorts[-1][0]] == block_counts[i] \
                and len(cohorts[-1]) < units_per_crossbar:
            cohorts[-1].append(i)
        else:
            cohorts.append([i])
    return cohorts


def hash_messages(messages: list[bytes], config: CrossbarConfig | None = None,
                  crossbars: int = 1, params: KeccakParams = KECCAK,
                  trace=None) -> tuple[list[bytes], ExecutionStats]:
    """Hash messages on simulated crossbars, one unit per message.

    Messages sharing a block count run in lockstep cohorts (identical
    bundles across their partitions); cohorts and crossbars execute
    sequentially and their stats merge into one report.
    """
    config = config or CrossbarConfig()
    compiled = compiled_keccak(config)
    capacity = compiled.layout.num_units * crossbars
    if len(messages) > capacity:
        raise CapacityError(
            f"{len(messages)} messages exceed {capacity} units "
            f"({compiled.layout.num_units} per crossbar x {crossbars})")

    blocks = [pad_message(m, params) for m in messages]
    digests: list[bytes | None] = [None] * len(messages)
    stats = ExecutionStats(gate_energy_fj=config.gate_energy_fj)
    cohorts = plan_cohorts([len(b) for b in blocks], compiled.layout.num_units)

    for cohort in cohorts:
        xbar = Crossbar(config)
        compiled.layout.setup_shared_blocks(xbar)
        unit_ids = list(range(len(cohort)))
        deltas = compiled.deltas_for(unit_ids)
        n_blocks = len(blocks[cohort[0]])

        for i, msg_index in enumerate(cohort):
            write_unit_state(xbar, compiled.layout.unit(i),
                             block_state_bits(blocks[msg_index][0], params))
        compiled.run_permute(xbar, deltas, trace=trace)
        for b in range(1, n_blocks):
            lane_bits = np.stack([block_to_bits(blocks[m][b], params)
                                  for m in cohort])
            compiled.run_absorb(xbar, unit_ids, deltas, lane_bits, trace=trace)
            compiled.run_permute(xbar, deltas, trace=trace)

        for i, msg_index in enumerate(cohort):
            state = read_unit_state(xbar, compiled.layout.unit(i))
            digests[msg_index] = _digest_from_state(state, params)
        stats.merge(xbar.stats)

    return digests, stats


def hash_message(message: bytes, config: CrossbarConfig | None = None,
                 params: KeccakParams = KECCAK) -> tuple[bytes, ExecutionStats]:
    digests, stats = hash_messages([message], config=config, params=params)
    return digests[0], stats


def measure_round_stats(n_units: int = 1,
                        config: CrossbarConfig | None = None) -> dict:
    """Per-round cycle/gate/energy figures measured from one permutation."""
    config = config or CrossbarConfig()
    compiled = compiled_keccak(config)
    xbar = Crossbar(config)
    compiled.layout.setup_shared_blocks(xbar)
    unit_ids = list(range(n_units))
    deltas = compiled.deltas_for(unit_ids)
    for u in unit_ids:
        write_unit_state(xbar, compiled.layout.unit(u),
                         np.zeros((LANE_BITS, STATE_COLS), dtype=np.uint8))
    before = {k: (v.cycles, v.gate_executions)
              for k, v in xbar.stats.per_label.items()}
    compiled.run_permute(xbar, deltas)

    steps = {}
    total_cycles = 0
    total_gates = 0
    for label, entry in sorted(xbar.stats.per_label.items()):
        cycles0, gates0 = before.get(label, (0, 0))
        cycles = entry.cycles - cycles0
        gates = entry.gate_executions - gates0
        if label == "io":
            continue
        steps[label] = {
            "cycles_per_round": cycles / KECCAK.rounds,
            "gate_executions_per_round": gates / KECCAK.rounds,
            "energy_per_round_per_unit_nj":
                gates * config.gate_energy_fj / KECCAK.rounds / n_units * 1e-6,
        }
        total_cycles += cycles
        total_gates += gates
    return {
        "units": n_units,
        "cycles_per_round": total_cycles / KECCAK.rounds,
        "gate_executions_per_round": total_gates / KECCAK.rounds,
        "energy_per_round_per_unit_nj":
            total_gates * config.gate_energy_fj / KECCAK.rounds / n_units * 1e-6,
        "per_step": steps,
    }
