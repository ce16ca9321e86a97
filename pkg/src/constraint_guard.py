"""
Constraint Guard - post-slot checks of storage and association
"""
from typing import Dict, List, Optional, Tuple

from sim_logger import log_constraint_violation, sim_logger


class ConstraintViolation(RuntimeError):
    """Raised in strict mode when a slot breaks the storage or association constraint"""


class ConstraintGuard:
    """Re-derives what a slot cached and who it served, independently of the optimizer"""

    def __init__(self, config: Optional[Dict] = None):
        config = config or {}

        # Section is optional; if present it must say what to do on a violation
        guard_config = config.get("constraints")
        if guard_config is not None and "strict" not in guard_config:
            raise ValueError("❌ CRITICAL: 'constraints.strict' not set in config!")

        guard_config = guard_config or {}
        self.strict = bool(guard_config.get("strict", False))
        self.storage_tolerance_bytes = float(guard_config.get("storage_tolerance_bytes", 0.0))

        self.violations: List[str] = []
        self.slots_checked = 0

    def check_storage(self, scenario, metrics) -> Tuple[bool, str]:
        """
        Sum of cached service sizes <= storage, per server

        Sizes come from the scenario's service library, not from the reported used_bytes.
        """
        sizes = {svc.model_id: svc.total_bytes for svc in scenario.services}
        for server in scenario.servers:
            deployed = metrics.deployments.get(server.server_id, ())
            unknown = [mid for mid in deployed if mid not in sizes]
            if unknown:
                return False, f"UNKNOWN_SERVICE on {server.server_id}: {unknown}"
            used = sum(sizes[mid] for mid in deployed)
            if used > server.storage_bytes + self.storage_tolerance_bytes:
                return False, (f"STORAGE_EXCEEDED on {server.server_id} "
                               f"({used:.0f} B > {server.storage_bytes:.0f} B)")
            reported = metrics.used_bytes.get(server.server_id, 0.0)
            if abs(reported - used) > max(1.0, 1e-9 * used):
                return False, f"USED_BYTES_MISMATCH on {server.server_id} ({reported:.0f} != {used:.0f})"
        return True, "OK"

    def check_association(self, scenario, metrics) -> Tuple[bool, str]:
        """Every MD associated with exactly one known server"""
        server_ids = set(scenario.server_ids)
        seen = {}
        for record in metrics.records:
            if record.server_id not in server_ids:
                return False, f"UNKNOWN_SERVER {record.server_id} for {record.md_id}"
            seen[record.md_id] = seen.get(record.md_id, 0) + 1

        missing = [md_id for md_id in scenario.md_ids if md_id not in seen]
        if missing:
            return False, f"UNASSOCIATED MDs: {missing}"
        doubled = [md_id for md_id, count in seen.items() if count > 1]
        if doubled:
            return False, f"MULTIPLY_ASSOCIATED MDs: {doubled}"
        return True, "OK"

    def check_slot(self, scenario, metrics) -> Tuple[bool, str]:
        """
        Run every check for one slot

        Returns:
            (ok: bool, reason: str) - the first failing check's reason, or "OK"
        """
        self.slots_checked += 1
        for check in (self.check_storage, self.check_association):
            ok, reason = check(scenario, metrics)
            if not ok:
                self.violations.append(f"slot {metrics.slot}: {reason}")
                log_constraint_violation(metrics.policy, metrics.slot, reason)
                if self.strict:
                    raise ConstraintViolation(f"slot {metrics.slot} ({metrics.policy}): {reason}")
                return False, reason
        return True, "OK"

    def get_stats(self) -> Dict:
        return {
            'slots_checked': self.slots_checked,
            'violations': len(self.violations),
            'strict': self.strict,
        }

    def log_stats(self):
        stats = self.get_stats()
        sim_logger.info(f"GUARD | Slots: {stats['slots_checked']} | Violations: {stats['violations']} | "
                        f"Strict: {stats['strict']}")
