"""Pass/fail records carried by every verifier.

Verification failures are data, not exceptions: a certificate lists named
checks with residuals so reports can show exactly what failed and by how much.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "residual": self.residual,
            "detail": self.detail,
        }


@dataclass
class Certificate:
    subject: str
    checks: List[Check] = field(default_factory=list)

    def add(self, name: str, passed: bool, residual: Optional[float] = None, detail: str = "") -> Check:
        check = Check(name=name, passed=bool(passed), residual=residual, detail=detail)
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [check for check in self.checks if not check.passed]

    def get(self, name: str) -> Check:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subject": self.subject,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }
