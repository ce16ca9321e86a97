"""
Simulation Logger - pipe-delimited event records for slots, games and runs

Nothing is attached at import time; configure_logging() adds the file handler.
Log lines carry timestamps, output bundles never do.
"""
import logging
from pathlib import Path
from typing import Optional

sim_logger = logging.getLogger('simulation')
sim_logger.setLevel(logging.INFO)

_handler: Optional[logging.Handler] = None


def configure_logging(log_file: str = 'logs/simulation.log', level: str = 'INFO') -> logging.Logger:
    """Attach the file handler once; later calls only adjust the level"""
    global _handler
    sim_logger.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    if _handler is None:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        _handler = logging.FileHandler(path)
        _handler.setFormatter(logging.Formatter(
            '%(asctime)s [%(levelname)s] %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        sim_logger.addHandler(_handler)
    return sim_logger


def log_scenario_loaded(name: str, scenario_hash: str, n_devices: int, n_servers: int, n_services: int):
    sim_logger.info(
        f"SCENARIO | Name: {name} | Hash: {scenario_hash[:12]} | "
        f"MDs: {n_devices} | Servers: {n_servers} | Services: {n_services}"
    )


def log_slot_done(policy: str, slot: int, delay_s: float, loss: float, xi: float, welfare: float):
    sim_logger.info(
        f"SLOT_DONE | Policy: {policy} | Slot: {slot} | Delay: {delay_s:.4f}s | "
        f"Loss: {loss:.3f} | Xi: {xi:.3f} | Welfare: {welfare:.4f}"
    )


def log_game_finished(slot: int, iterations: int, accepted: int, capped: bool,
                      evaluations: int, cache_hits: int):
    """Capped games are warnings: the partition is not certified stable"""
    msg = (
        f"GAME_DONE | Slot: {slot} | Iterations: {iterations} | Accepted: {accepted} | "
        f"Evaluations: {evaluations} | Cache hits: {cache_hits}"
    )
    if capped:
        sim_logger.warning(msg + " | CAPPED at max_iterations")
    else:
        sim_logger.info(msg)


def log_theta_warning(slot: int, md_id: str, loss: float, budget: float):
    sim_logger.warning(
        f"THETA_NORMALISATION | Slot: {slot} | MD: {md_id} | "
        f"Loss: {loss:.4f} > Budget^2: {budget ** 2:.4f}"
    )


def log_drift(slot: int, drift: float, exact_bound: float, theta_bound: float, theta_holds: bool):
    msg = (
        f"DRIFT | Slot: {slot} | Drift: {drift:.4f} | Exact bound: {exact_bound:.4f} | "
        f"Theta bound: {theta_bound:.4f}"
    )
    if theta_holds:
        sim_logger.debug(msg)
    else:
        sim_logger.warning(msg + " | THETA BOUND EXCEEDED")


def log_constraint_violation(policy: str, slot: int, reason: str):
    sim_logger.error(f"CONSTRAINT_VIOLATION | Policy: {policy} | Slot: {slot} | Reason: {reason}")


def log_streamed_request(slot: int, md_id: str, model_id: str, server_id: str):
    sim_logger.info(
        f"STREAMED | Slot: {slot} | MD: {md_id} | Model: {model_id} | Server: {server_id} | "
        f"no capacity left, model not cached"
    )


def log_run_summary(policy: str, seed: int, slots: int, avg_delay_s: float, privacy_pct: float,
                    final_xi: float, violations: int):
    sim_logger.info(
        f"RUN_DONE | Policy: {policy} | Seed: {seed} | Slots: {slots} | "
        f"Avg delay: {avg_delay_s:.4f}s | Privacy loss: {privacy_pct:.2f}% | "
        f"Final Xi: {final_xi:.3f} | Violations: {violations}"
    )


def log_sweep_point(axis: str, value, policy: str, seed: int, avg_delay_s: float, privacy_pct: float):
    sim_logger.info(
        f"SWEEP_POINT | Axis: {axis} | Value: {value} | Policy: {policy} | Seed: {seed} | "
        f"Avg delay: {avg_delay_s:.4f}s | Privacy loss: {privacy_pct:.2f}%"
    )
