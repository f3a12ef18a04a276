"""Per-round trace records and their stable CSV serialization."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

CSV_HEADER = (
    "round",
    "potential",
    "delta",
    "bound",
    "max_price",
    "min_price",
    "assumption1_ok",
    "kl_to_equilibrium",
    "recurrence_ok",
)


@dataclass(frozen=True)
class TraceRecord:
    """One simulated round: measured potential, its jump cap, running bound.

    Diagnostics are optional and dynamics-specific: price extremes and the
    price-cap flag for tatonnement, distance to the per-round equilibrium and
    the recurrence flag for bid dynamics.
    """

    round: int
    potential: float
    delta: float
    bound: float
    max_price: float | None = None
    min_price: float | None = None
    assumption1_ok: bool | None = None
    kl_to_equilibrium: float | None = None
    recurrence_ok: bool | None = None


def format_number(x: float) -> str:
    """17 significant digits: enough to round-trip doubles byte-stably."""
    return f"{x:.17g}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return format_number(float(value))


def trace_csv_lines(records: Sequence[TraceRecord]) -> Iterable[str]:
    yield ",".join(CSV_HEADER)
    for r in records:
        yield ",".join(
            _cell(v)
            for v in (
                r.round,
                r.potential,
                r.delta,
                r.bound,
                r.max_price,
                r.min_price,
                r.assumption1_ok,
                r.kl_to_equilibrium,
                r.recurrence_ok,
            )
        )


def write_trace_csv(records: Sequence[TraceRecord], path) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in trace_csv_lines(records):
            fh.write(line + "\n")


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
