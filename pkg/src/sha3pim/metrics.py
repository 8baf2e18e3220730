"""Throughput, power, and area-efficiency model for the crossbar hasher.

One unit streams r rate bits per permutation, so

    tput_unit   = (r / latency_round) * f
    tput_system = tput_unit * units_per_crossbar * crossbars
    power       = tput_system * energy_per_round_per_unit / r

from which throughput-per-watt collapses to r / energy, independent of how
many units or crossbars run. Inputs may come from simulator measurements or
from the published reference constants (see ``REFERENCE_INPUT``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class MetricsInput:
    clock_hz: float = 1.0 / 3e-9          # 1 / gate delay
    rate_bits: int = 1088
    latency_round_cycles: float = 3494.0
    energy_unit_j: float = 0.765e-9       # per round, per unit
    units_per_crossbar: int = 378
    crossbars: int = 1
    cell_area_f2: float = 4.0
    crossbar_cells: int = 1024 * 1024

    def validate(self) -> None:
        values = (self.clock_hz, self.rate_bits, self.latency_round_cycles,
                  self.energy_unit_j, self.units_per_crossbar, self.crossbars,
                  self.cell_area_f2, self.crossbar_cells)
        if any(v <= 0 for v in values):
            raise ValueError("all metrics inputs must be positive")


# Published reference operating point: 3,494 cycles and 0.765 nJ per round
# per unit at 333 MHz with 378 units on one 1024x1024 crossbar.
REFERENCE_INPUT = MetricsInput()

# Published accelerator comparison rows (display-only, never recomputed):
# frequency MHz, throughput Gbps, throughput/W Gbps/W, throughput/area bps/F^2.
COMPARISON_TABLE = {
    "65nm ASIC": {"f_mhz": 1000, "tput_gbps": 48.0, "tput_per_w": None,
                  "tput_per_area": 7619.0},
    "SHINE-1": {"f_mhz": 2000, "tput_gbps": 33.4, "tput_per_w": 263.0,
                "tput_per_area": 21916.0},
    "SHINE-2": {"f_mhz": 2000, "tput_gbps": 54.0, "tput_per_w": 311.0,
                "tput_per_area": 22227.0},
}


@dataclass(frozen=True)
class MetricsReport:
    tput_unit_bps: float
    tput_system_bps: float
    power_system_w: float
    tput_per_watt_bps: float
    tput_per_area_bps_f2: float

    def as_dict(self) -> dict:
        return {
            "tput_unit_gbps": self.tput_unit_bps / 1e9,
            "tput_system_gbps": self.tput_system_bps / 1e9,
            "power_system_w": self.power_system_w,
            "tput_per_watt_gbps": self.tput_per_watt_bps / 1e9,
            "tput_per_area_bps_f2": self.tput_per_area_bps_f2,
        }


def compute(inputs: MetricsInput) -> MetricsReport:
    inputs.validate()
    tput_unit = inputs.rate_bits / inputs.latency_round_cycles * inputs.clock_hz
    tput_system = tput_unit * inputs.units_per_crossbar * inputs.crossbars
    power = tput_system * inputs.energy_unit_j / inputs.rate_bits
    area = inputs.crossbars * inputs.crossbar_cells * inputs.cell_area_f2
    return MetricsReport(
        tput_unit_bps=tput_unit,
        tput_system_bps=tput_system,
        power_system_w=power,
        tput_per_watt_bps=tput_system / power,
        tput_per_area_bps_f2=tput_system / area,
    )


def scaled(inputs: MetricsInput, crossbars: int) -> MetricsReport:
    return compute(replace(inputs, crossbars=crossbars))
