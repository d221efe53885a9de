"""Check records shared by the analyzer and the verifier."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


@dataclass
class CheckRecord:
    """Outcome of one inequality check.

    ``worst_margin`` is the signed slack of the inequality in its own units
    (negative means violated); ``passed`` is ``worst_margin >= -tolerance``.
    Skipped and informational checks count as passing.
    """

    check_id: str
    scenario_id: str
    worst_margin: float
    worst_location: dict
    tolerance: float
    units: str = ""
    status: str = "checked"
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.status in ("skipped", "informational"):
            return True
        if self.status == "failed":
            return False
        return bool(math.isfinite(self.worst_margin) and self.worst_margin >= -self.tolerance)

    def to_dict(self):
        out = asdict(self)
        out["pass"] = self.passed
        return out
