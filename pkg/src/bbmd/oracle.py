"""Query-counted, budgeted, memoized access to an allocation rule."""

from __future__ import annotations

import json
import threading
from typing import Callable, IO, Iterable

from .core import Allocation, TypeProfile
from .errors import BudgetExceeded

Rule = Callable[[TypeProfile], Allocation]


class OracleSession:
    """Black-box handle on ``rule``.

    The first query at a profile is billed and logged; repeats are served from
    the memo for free. ``budget=None`` means unlimited. Accounting is guarded
    by a lock so concurrent callers see linearizable counts.
    """

    def __init__(self, rule: Rule, budget: int | None = None, seed: int = 0) -> None:
        if budget is not None and budget < 0:
            raise ValueError("budget must be non-negative")
        self.rule = rule
        self.budget = budget
        self.seed = seed
        self.query_log: list[tuple[TypeProfile, Allocation]] = []
        self.memo: dict[TypeProfile, Allocation] = {}
        self._lock = threading.Lock()

    @property
    def queries_used(self) -> int:
        return len(self.query_log)

    @property
    def remaining(self) -> int | None:
        return None if self.budget is None else self.budget - self.queries_used

    def query(self, x: TypeProfile) -> Allocation:
        with self._lock:
            hit = self.memo.get(x)
            if hit is not None:
                return hit
            if self.budget is not None and self.queries_used >= self.budget:
                raise BudgetExceeded(f"budget of {self.budget} queries exhausted")
            out = self.rule(x)
            self.memo[x] = out
            self.query_log.append((x, out))
            return out

    def query_many(self, xs: Iterable[TypeProfile]) -> list[Allocation]:
        return [self.query(x) for x in xs]

    def observed_range(self) -> set[Allocation]:
        return {y for _, y in self.query_log}

    def log_records(self) -> list[dict]:
        return [
            {"query": i + 1, "profile": x.to_json(), "output": y.to_json()}
            for i, (x, y) in enumerate(self.query_log)
        ]

    def export_jsonl(self, fh: IO[str]) -> None:
        for rec in self.log_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def observed_range(session: OracleSession) -> set[Allocation]:
    return session.observed_range()


def query(session: OracleSession, x: TypeProfile) -> Allocation:
    return session.query(x)
