"""Tally invariant checks and build the ``summary.json`` payload."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict
from typing import Any, Dict, List, Optional

from .models import RunConfig

STATUS_BY_CODE = {0: "ok", 1: "hypothesis-violated", 2: "consistency-failure", 3: "config-error"}


class Summarizer:
    """Collect named pass/fail checks and free-form metrics for one run.

    Each check name keeps separate passed and failed counts; every failure is also
    recorded as a named violation so the summary can say which assertion broke.
    """

    def __init__(self) -> None:
        self.passed: Counter[str] = Counter()
        self.failed: Counter[str] = Counter()
        self.violations: List[str] = []
        self.metrics: Dict[str, Any] = {}

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        if ok:
            self.passed[name] += 1
        else:
            self.failed[name] += 1
            message = f"{name}: {detail}" if detail else name
            self.violations.append(message)
            logging.warning("check failed: %s", message)
        return bool(ok)

    def record(self, **metrics: Any) -> None:
        self.metrics.update(metrics)

    def violation(self, name: str, detail: str) -> None:
        self.failed[name] += 1
        self.violations.append(f"{name}: {detail}")

    @property
    def ok(self) -> bool:
        return not self.failed

    @property
    def exit_code(self) -> int:
        """A failed check is a numerical consistency failure."""
        return 0 if self.ok else 2

    def tally(self) -> Dict[str, Dict[str, int]]:
        names = sorted(set(self.passed) | set(self.failed))
        return {name: {"passed": self.passed[name], "failed": self.failed[name]} for name in names}

    def payload(self, config: RunConfig, exit_code: int, wall_time: float, error: Optional[str] = None) -> Dict[str, Any]:
        body: Dict[str, Any] = {
            "subcommand": config.subcommand,
            "config": asdict(config),
            "status": STATUS_BY_CODE.get(exit_code, "error"),
            "exit_code": exit_code,
            "tally": self.tally(),
            "violations": list(self.violations),
            "wall_time": wall_time,
            "metrics": dict(self.metrics),
        }
        if error:
            body["error"] = error
        return body
