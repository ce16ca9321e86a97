"""
Unit parsing - every physical quantity in catalogs and scenarios carries its unit
"""
import re
from typing import Dict, Tuple


class UnitError(ValueError):
    """Quantity string without a recognised unit"""


# dimension -> {unit: multiplier to base unit}
# Sizes use binary multiples (Table-1 style: 12544 KB = 224*224*64*4 bytes)
UNITS: Dict[str, Dict[str, float]] = {
    'bytes': {'B': 1.0, 'KB': 1024.0, 'MB': 1024.0 ** 2, 'GB': 1024.0 ** 3},
    'flops': {'FLOPs': 1.0, 'KFLOPs': 1e3, 'MFLOPs': 1e6, 'GFLOPs': 1e9, 'TFLOPs': 1e12},
    'flops_rate': {'FLOPS': 1.0, 'KFLOPS': 1e3, 'MFLOPS': 1e6, 'GFLOPS': 1e9, 'TFLOPS': 1e12},
    'hz': {'Hz': 1.0, 'kHz': 1e3, 'MHz': 1e6, 'GHz': 1e9},
    'bps': {'bps': 1.0, 'kbps': 1e3, 'Mbps': 1e6, 'Gbps': 1e9},
    'dbm': {'dBm': 1.0},
    'dbm_hz': {'dBm/Hz': 1.0},
    'db': {'dB': 1.0},
    'meters': {'m': 1.0, 'km': 1e3},
}

BASE_UNIT = {
    'bytes': 'B',
    'flops': 'FLOPs',
    'flops_rate': 'FLOPS',
    'hz': 'Hz',
    'bps': 'bps',
    'dbm': 'dBm',
    'dbm_hz': 'dBm/Hz',
    'db': 'dB',
    'meters': 'm',
}

_QUANTITY_RE = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]+)\s*$')


def split_quantity(text: str) -> Tuple[float, str]:
    """Split '86.7 MFLOPs' into (86.7, 'MFLOPs')"""
    if not isinstance(text, str):
        raise UnitError(f"expected '<number> <unit>' string, got {text!r} (unit is mandatory)")
    match = _QUANTITY_RE.match(text)
    if not match:
        raise UnitError(f"cannot parse quantity {text!r} (expected '<number> <unit>')")
    return float(match.group(1)), match.group(2)


def parse_quantity(text: str, dimension: str) -> float:
    """
    Parse a quantity string and return its value in the dimension's base unit

    Args:
        text: e.g. '100 MHz', '-174 dBm/Hz', '7 KB'
        dimension: key of UNITS

    Raises:
        UnitError: missing unit, unknown unit or unit of the wrong dimension
    """
    if dimension not in UNITS:
        raise UnitError(f"unknown dimension '{dimension}'")
    value, unit = split_quantity(text)
    table = UNITS[dimension]
    if unit not in table:
        allowed = ', '.join(table)
        raise UnitError(f"unit '{unit}' in {text!r} is not a {dimension} unit (allowed: {allowed})")
    return value * table[unit]


def format_quantity(value: float, dimension: str) -> str:
    """Render a base-unit value so that parse_quantity gives back the same float"""
    return f"{float(value)!r} {BASE_UNIT[dimension]}"


def dbm_to_watts(dbm: float) -> float:
    """dBm -> W"""
    return 10.0 ** ((dbm - 30.0) / 10.0)
