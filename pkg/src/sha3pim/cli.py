"""Command-line front end: hash on the simulated crossbar, report metrics.

Every digest is cross-checked against the software reference; the exit
status is nonzero if any digest mismatches (1), an input cannot be parsed
or read (2), or the message count exceeds unit capacity (3).

Output: one line per message (``<digest-hex>  <OK|MISMATCH>``), then a
versioned JSON report (redirect with ``--report``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import engine, keccak_ref, metrics
from .crossbar import CapacityError, CrossbarConfig
from .keccak_xbar import (
    KECCAK,
    hash_messages,
    measure_round_stats,
    pad_message,
    plan_cohorts,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_BAD_INPUT = 2
EXIT_CAPACITY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sha3pim",
        description="SHA3-256 on a simulated memristive crossbar "
                    "(stateful-logic, cycle-accurate)")
    src = parser.add_argument_group("message sources")
    src.add_argument("--text", action="append", default=[], metavar="STR",
                     help="hash a literal string (UTF-8; repeatable)")
    src.add_argument("--hex", action="append", default=[], metavar="HEX",
                     help="hash a hex-encoded byte string (repeatable)")
    src.add_argument("--file", action="append", default=[], metavar="PATH",
                     help="hash a file's contents (repeatable)")
    src.add_argument("--random", type=int, metavar="N",
                     help="hash N pseudorandom messages")
    src.add_argument("--len", type=int, default=136, metavar="L",
                     help="length in bytes of each random message (default 136)")
    src.add_argument("--seed", type=int, default=1, metavar="S",
                     help="PRNG seed for --random (default 1; printed)")

    hw = parser.add_argument_group("crossbar configuration")
    hw.add_argument("--crossbars", type=int, default=1, metavar="N",
                    help="number of crossbar arrays (default 1)")
    hw.add_argument("--rows", type=int, default=1024)
    hw.add_argument("--cols", type=int, default=1024)
    hw.add_argument("--hpart", type=int, default=27,
                    help="horizontal partition count (default 27)")
    hw.add_argument("--vpart", type=int, default=14,
                    help="vertical partition count (default 14)")
    hw.add_argument("--gate-delay-ns", type=float, default=3.0)
    hw.add_argument("--gate-energy-fj", type=float, default=6.4)
    hw.add_argument("--strict-init", action="store_true",
                    help="fail if any gate reads a never-written cell")

    out = parser.add_argument_group("reporting")
    out.add_argument("--metrics", action="store_true",
                     help="include throughput/power/area metrics in the report")
    out.add_argument("--paper-constants", action="store_true",
                     help="compute metrics from the published reference "
                          "operating point (3,494 cycles, 0.765 nJ, 378 "
                          "units, 333 MHz) instead of measuring")
    out.add_argument("--trace", metavar="PATH",
                     help="write a per-cycle gate trace (JSON lines); slow")
    out.add_argument("--report", metavar="PATH",
                     help="write the JSON report here instead of stdout")
    return parser


def _collect_messages(args) -> tuple[list[bytes], int | None]:
    messages: list[bytes] = []
    for text in args.text:
        messages.append(text.encode("utf-8"))
    for hx in args.hex:
        try:
            messages.append(bytes.fromhex(hx))
        except ValueError:
            raise SystemExit2(f"malformed hex input: {hx!r}")
    for path in args.file:
        try:
            with open(path, "rb") as fh:
                messages.append(fh.read())
        except OSError as exc:
            raise SystemExit2(f"cannot read file {path}: {exc}")
    seed = None
    if args.random is not None:
        if args.random <= 0 or args.len < 0:
            raise SystemExit2("--random needs N > 0 and --len L >= 0")
        seed = args.seed
        rng = np.random.default_rng(seed)
        for _ in range(args.random):
            messages.append(rng.integers(0, 256, size=args.len,
                                         dtype=np.uint8).tobytes())
    return messages, seed


class SystemExit2(Exception):
    """Bad input: distinct message, exit status 2."""


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not (args.text or args.hex or args.file or args.random or args.metrics):
        build_parser().error("no message source given (and no --metrics)")

    config = CrossbarConfig(
        rows=args.rows, cols=args.cols,
        horizontal_partitions=args.hpart, vertical_partitions=args.vpart,
        gate_delay_ns=args.gate_delay_ns, gate_energy_fj=args.gate_energy_fj,
        strict_init=args.strict_init)

    try:
        messages, seed = _collect_messages(args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "backend": engine.active_backend(),
        "crossbar": {**dataclasses.asdict(config),
                     "units_per_crossbar": config.num_units,
                     "crossbars": args.crossbars},
    }
    if seed is not None:
        print(f"seed: {seed}")
        report["seed"] = seed

    status = EXIT_OK
    if messages:
        trace_stream = open(args.trace, "w") if args.trace else None
        try:
            digests, stats = hash_messages(messages, config=config,
                                           crossbars=args.crossbars,
                                           trace=trace_stream)
        except CapacityError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CAPACITY
        finally:
            if trace_stream:
                trace_stream.close()

        entries = []
        for i, (message, digest) in enumerate(zip(messages, digests)):
            expected = keccak_ref.sha3_256(message)
            verdict = "OK" if digest == expected else "MISMATCH"
            if verdict != "OK":
                status = EXIT_MISMATCH
            print(f"{digest.hex()}  {verdict}")
            entries.append({"index": i, "bytes": len(message),
                            "blocks": len(pad_message(message)),
                            "digest": digest.hex(), "verdict": verdict})
        rounds = KECCAK.rounds * sum(e["blocks"] for e in entries)
        report["messages"] = entries
        report["stats"] = stats.as_dict()
        non_io_cycles = sum(v.cycles for k, v in stats.per_label.items()
                            if k != "io")
        report["stats"]["keccak_cycles_per_round"] = non_io_cycles / rounds
        cohorts = plan_cohorts([e["blocks"] for e in entries], config.num_units)
        report["unit_packing"] = {
            "units_per_crossbar": config.num_units,
            "unit_cells": [config.unit_rows, config.unit_cols],
            "messages": len(entries),
            "lockstep_cohorts": [{"units": len(c),
                                  "blocks": entries[c[0]]["blocks"]}
                                 for c in cohorts],
        }

    if args.metrics:
        if args.paper_constants:
            inputs = dataclasses.replace(metrics.REFERENCE_INPUT,
                                         crossbars=args.crossbars)
            source = "reference-constants"
        else:
            measured = measure_round_stats(n_units=config.num_units,
                                           config=config)
            report["round_measurement"] = measured
            inputs = metrics.MetricsInput(
                clock_hz=config.clock_hz,
                latency_round_cycles=measured["cycles_per_round"],
                energy_unit_j=measured["energy_per_round_per_unit_nj"] * 1e-9,
                units_per_crossbar=config.num_units,
                crossbars=args.crossbars,
                cell_area_f2=config.cell_area_f2,
                crossbar_cells=config.rows * config.cols)
            source = "measured"
        report["metrics"] = {"source": source,
                             "inputs": dataclasses.asdict(inputs),
                             **metrics.compute(inputs).as_dict()}

    document = json.dumps(report, indent=2)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(document + "\n")
    else:
        print(document)
    return status


if __name__ == "__main__":
    sys.exit(main())
