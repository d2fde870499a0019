"""Constraint residual reports shared by the verification routines."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckRow:
    name: str
    residual: float
    tolerance: float
    passed: bool
    kind: str = "eq"  # "eq": |residual| <= tol, "le": residual <= tol
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "kind": self.kind,
            "note": self.note,
        }


@dataclass(frozen=True)
class ConstraintReport:
    rows: tuple[CheckRow, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def __getitem__(self, name: str) -> CheckRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def names(self) -> list[str]:
        return [r.name for r in self.rows]

    def failures(self) -> list[CheckRow]:
        return [r for r in self.rows if not r.passed]

    def as_dict(self) -> dict:
        return {"pass": self.passed, "rows": [r.as_dict() for r in self.rows]}

    def to_text(self, title: str = "") -> str:
        lines = [title] if title else []
        for r in self.rows:
            flag = "PASS" if r.passed else "FAIL"
            note = f"  ({r.note})" if r.note else ""
            lines.append(f"  [{flag}] {r.name:<40s} residual={r.residual: .3e} tol={r.tolerance:.1e}{note}")
        return "\n".join(lines)


class ReportBuilder:
    def __init__(self):
        self._rows: list[CheckRow] = []

    def eq(self, name, residual, tol, note=""):
        residual = float(residual)
        self._rows.append(CheckRow(name, residual, tol, bool(abs(residual) <= tol), "eq", note))
        return self

    def le(self, name, value, tol, note=""):
        """One-sided check ``value <= tol``."""
        value = float(value)
        self._rows.append(CheckRow(name, value, tol, bool(value <= tol), "le", note))
        return self

    def ge(self, name, value, tol, note=""):
        """One-sided check ``value >= -tol``; stored as ``-value <= tol``."""
        value = float(value)
        self._rows.append(CheckRow(name, value, tol, bool(value >= -tol), "ge", note))
        return self

    def build(self) -> ConstraintReport:
        return ConstraintReport(tuple(self._rows))
