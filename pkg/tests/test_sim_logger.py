import logging

from sim_logger import configure_logging, log_constraint_violation, log_game_finished, sim_logger


def test_capped_game_is_a_warning(caplog):
    with caplog.at_level(logging.INFO, logger="simulation"):
        log_game_finished(3, 40, 5, False, 80, 12)
        log_game_finished(4, 10_000, 9, True, 900, 40)
    first, second = caplog.records
    assert first.levelno == logging.INFO and first.getMessage().startswith("GAME_DONE | Slot: 3")
    assert second.levelno == logging.WARNING and "CAPPED" in second.getMessage()


def test_violation_is_an_error(caplog):
    with caplog.at_level(logging.INFO, logger="simulation"):
        log_constraint_violation("fe", 2, "STORAGE_EXCEEDED on es0")
    assert caplog.records[0].levelno == logging.ERROR
    assert caplog.records[0].getMessage() == "CONSTRAINT_VIOLATION | Policy: fe | Slot: 2 | Reason: STORAGE_EXCEEDED on es0"


def test_configure_sets_level(tmp_path):
    logger = configure_logging(str(tmp_path / "sim.log"), "debug")
    assert logger is sim_logger
    assert logger.level == logging.DEBUG
    configure_logging(str(tmp_path / "other.log"), "INFO")
    assert sim_logger.level == logging.INFO
