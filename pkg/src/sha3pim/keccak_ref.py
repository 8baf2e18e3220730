"""Plain-software reference implementation of SHA3-256 and the Keccak-f steps.

This module is the ground truth the crossbar simulation is checked against.
It deliberately shares no code, tables, or helpers with the in-memory
implementation: everything here is recomputed from the FIPS-202 definitions
on ordinary Python integers. Speed is a non-goal.

State convention: a list of 25 lane values (64-bit ints), indexed
``lane(x, y) = state[x + 5 * y]``.
"""

from __future__ import annotations

LANE_BITS = 64
RATE_BYTES = 136          # r = 1088 bits for SHA3-256
DIGEST_BYTES = 32
NUM_ROUNDS = 24

# FIPS-202 rotation offsets, ROTATION[x][y]
ROTATION = [
    [0, 36, 3, 41, 18],
    [1, 44, 10, 45, 2],
    [62, 6, 43, 15, 61],
    [28, 55, 25, 21, 56],
    [27, 20, 39, 8, 14],
]

# FIPS-202 round constants RC[0..23]
ROUND_CONSTANTS = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]

_MASK = (1 << LANE_BITS) - 1


def rotl64(value: int, amount: int) -> int:
    """Cyclic left shift of a 64-bit lane."""
    amount %= LANE_BITS
    return ((value << amount) | (value >> (LANE_BITS - amount))) & _MASK


def zero_state() -> list[int]:
    return [0] * 25


def theta(state: list[int]) -> list[int]:
    c = [state[x] ^ state[x + 5] ^ state[x + 10] ^ state[x + 15] ^ state[x + 20]
         for x in range(5)]
    d = [c[(x - 1) % 5] ^ rotl64(c[(x + 1) % 5], 1) for x in range(5)]
    return [state[x + 5 * y] ^ d[x] for y in range(5) for x in range(5)]


def rho(state: list[int]) -> list[int]:
    return [rotl64(state[x + 5 * y], ROTATION[x][y]) for y in range(5) for x in range(5)]


def pi(state: list[int]) -> list[int]:
    out = zero_state()
    for x in range(5):
        for y in range(5):
            out[y + 5 * ((2 * x + 3 * y) % 5)] = state[x + 5 * y]
    return out


def chi(state: list[int]) -> list[int]:
    out = zero_state()
    for y in range(5):
        for x in range(5):
            a = state[x + 5 * y]
            b = state[(x + 1) % 5 + 5 * y]
            c = state[(x + 2) % 5 + 5 * y]
            out[x + 5 * y] = a ^ ((b ^ _MASK) & c)
    return out


def iota(state: list[int], round_index: int) -> list[int]:
    out = list(state)
    out[0] ^= ROUND_CONSTANTS[round_index]
    return out


def keccak_f(state: list[int]) -> list[int]:
    for round_index in range(NUM_ROUNDS):
        state = iota(chi(pi(rho(theta(state)))), round_index)
    return state


def _absorb_block(state: list[int], block: bytes) -> list[int]:
    state = list(state)
    for lane in range(RATE_BYTES // 8):
        word = int.from_bytes(block[8 * lane:8 * lane + 8], "little")
        state[lane] ^= word
    return keccak_f(state)


def sha3_256(message: bytes) -> bytes:
    """SHA3-256 digest of ``message`` (pad10*1 with the 0b01 domain suffix)."""
    padded = bytearray(message)
    padded.append(0x06)
    while len(padded) % RATE_BYTES:
        padded.append(0x00)
    padded[-1] |= 0x80

    state = zero_state()
    for offset in range(0, len(padded), RATE_BYTES):
        state = _absorb_block(state, bytes(padded[offset:offset + RATE_BYTES]))

    digest = b"".join(state[lane].to_bytes(8, "little") for lane in range(4))
    return digest[:DIGEST_BYTES]
