"""Pass/fail certificates shared by the scalar and grid checks."""

from dataclasses import dataclass, field


@dataclass
class CheckResult:
    name: str
    passed: bool
    min_margin: float
    worst_point: object = None
    n_checked: int = 0

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "min_margin": float(self.min_margin),
            "worst_point": _jsonable(self.worst_point),
            "n_checked": int(self.n_checked),
        }


@dataclass
class CertificateReport:
    """Collection of named inequality checks with their worst margins.

    A margin is ``rhs - lhs`` of an inequality ``lhs <= rhs``; it is negative
    exactly where the inequality is violated.
    """

    checks: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    def add(self, result):
        self.checks[result.name] = result

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def failures(self):
        return [c for c in self.checks.values() if not c.passed]

    def merge(self, other, prefix=""):
        for name, c in other.checks.items():
            key = f"{prefix}{name}"
            self.checks[key] = CheckResult(key, c.passed, c.min_margin, c.worst_point, c.n_checked)

    def to_dict(self):
        return {
            "passed": self.passed,
            "context": _jsonable(self.context),
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
        }


def _jsonable(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)
