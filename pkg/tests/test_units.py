import pytest

from units import UnitError, dbm_to_watts, format_quantity, parse_quantity


def test_binary_byte_multiples():
    assert parse_quantity("12544 KB", "bytes") == 224 * 224 * 64 * 4
    assert parse_quantity("1 GB", "bytes") == 1024 ** 3


@pytest.mark.parametrize("text,dimension,expected", [
    ("86.7 MFLOPs", "flops", 86.7e6),
    ("50 GFLOPS", "flops_rate", 50e9),
    ("100 MHz", "hz", 100e6),
    ("600 Mbps", "bps", 600e6),
    ("43 dBm", "dbm", 43.0),
    ("-174 dBm/Hz", "dbm_hz", -174.0),
    ("8 dB", "db", 8.0),
    ("0.2 km", "meters", 200.0),
])
def test_parse_quantity(text, dimension, expected):
    assert parse_quantity(text, dimension) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["100", 100, "100 furlongs", "MHz", ""])
def test_missing_or_unknown_unit_is_an_error(text):
    with pytest.raises(UnitError):
        parse_quantity(text, "hz")


def test_unit_of_wrong_dimension():
    with pytest.raises(UnitError, match="not a bytes unit"):
        parse_quantity("5 MHz", "bytes")


def test_format_reloads_bit_exactly():
    value = parse_quantity("144.3 KB", "bytes")
    assert parse_quantity(format_quantity(value, "bytes"), "bytes") == value


def test_dbm_to_watts():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(23.0) == pytest.approx(0.19953, rel=1e-4)
