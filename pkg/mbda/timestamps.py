"""UTC instants as integer epoch seconds, and their ISO-8601 text form."""

from __future__ import annotations

from datetime import datetime, timezone

from mbda.errors import DataError


def to_epoch(dt: datetime) -> int:
    """Whole seconds since the epoch; naive datetimes are taken as UTC."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() // 1)


def format_instant(epoch: int) -> str:
    """2012-04-05T17:51:00Z"""
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_instant(text: str) -> int:
    """Parse an ISO-8601 instant (Z or offset suffix; zone-less means UTC)."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as e:
        raise DataError(f"not an ISO-8601 instant: {text!r}") from e
    return to_epoch(dt)


def floor_to(epoch: int, interval: int) -> int:
    """Epoch-aligned interval start containing epoch."""
    return epoch - (epoch % interval)
