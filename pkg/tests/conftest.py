"""Pytest fixtures: pipeline config documents and a synthetic firewall/IDS corpus with a planted scan burst."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest
import structlog

from mbda.config.loader import load_config

CONFIG_YAML = """
common_interval: 60
sources:
  - name: fw
    interval: 60
    timestamp_pattern: '^(\\d{4}-\\d{2}-\\d{2} \\d{2}:\\d{2}:\\d{2})'
    timestamp_format: '%Y-%m-%d %H:%M:%S'
    features:
      - {name: deny, pattern: 'action=Deny'}
      - {name: allow, pattern: 'action=Allow'}
      - {name: tcp, pattern: 'proto=TCP'}
      - {name: udp, pattern: 'proto=UDP'}
      - {name: port_22, pattern: 'dport=22\\b'}
      - {name: port_80, pattern: 'dport=80\\b'}
      - {name: port_443, pattern: 'dport=443\\b'}
      - {name: flag_syn, pattern: 'flags=S\\b'}
      - {name: port_6667, pattern: 'dport=6667\\b', weight: 3}
      - {name: flag_finurg, pattern: 'flags=FPU\\b', weight: 3}
  - name: ids
    interval: 10
    timestamp_pattern: '(\\d{2}/\\d{2}/\\d{4}-\\d{2}:\\d{2}:\\d{2})'
    timestamp_format: '%m/%d/%Y-%H:%M:%S'
    features:
      - {name: prio1, pattern: '\\[Priority: 1\\]'}
      - {name: prio2, pattern: '\\[Priority: 2\\]'}
      - {name: prio3, pattern: '\\[Priority: 3\\]'}
      - {name: attempted_recon, pattern: 'Attempted Information Leak'}
      - {name: policy, pattern: 'Potential Corporate Privacy Violation'}
      - {name: scan, pattern: 'ET SCAN'}
      - {name: vnc_scan, pattern: 'VNC'}
"""

T0 = datetime(2012, 4, 5, tzinfo=timezone.utc)


@pytest.fixture
def config_text() -> str:
    return CONFIG_YAML


@pytest.fixture
def config():
    return load_config(CONFIG_YAML)


@pytest.fixture
def config_file(tmp_path) -> Path:
    p = tmp_path / "pipeline.yaml"
    p.write_text(CONFIG_YAML)
    return p


def fw_line(ts: datetime, action: str, proto: str, port: int, flags: str, host: int = 5) -> str:
    return (
        f"{ts:%Y-%m-%d %H:%M:%S} fw01 action={action} proto={proto} "
        f"src=172.23.1.{host} dst=10.32.0.{host % 200 + 1} dport={port} flags={flags}"
    )


def ids_line(ts: datetime, msg: str, priority: int, host: int = 5) -> str:
    return (
        f"[**] [1:{2000000 + priority}:3] {msg} [**] [Priority: {priority}] "
        f"{ts:%m/%d/%Y-%H:%M:%S} 172.23.1.{host} -> 10.32.0.{host % 200 + 1}"
    )


@dataclass
class Scenario:
    fw_path: Path
    ids_path: Path
    burst_start: datetime
    burst_end: datetime
    planted: set[str] = field(default_factory=set)
    n_lines: int = 0


def make_scenario(
    directory: Path,
    n_intervals: int = 2000,
    burst_at: int = 1200,
    burst_len: int = 3,
    burst_fw: int = 30,
    burst_ids: int = 10,
    seed: int = 7,
) -> Scenario:
    """
    Stationary background traffic over n_intervals one-minute intervals, plus a scan burst whose
    lines share no token with the background (dport=6667, flags=FPU, ET SCAN VNC, Priority 1).
    """
    rng = np.random.default_rng(seed)
    fw_lines: list[str] = []
    ids_lines: list[str] = []
    planted: set[str] = set()
    for i in range(n_intervals):
        minute = T0 + timedelta(minutes=i)
        for sec in sorted(rng.integers(0, 60, size=rng.poisson(20)).tolist()):
            ts = minute + timedelta(seconds=sec)
            proto = "TCP" if rng.random() < 0.7 else "UDP"
            fw_lines.append(
                fw_line(
                    ts,
                    "Allow" if rng.random() < 0.7 else "Deny",
                    proto,
                    int(rng.choice([22, 80, 443, 53])),
                    ("S" if rng.random() < 0.5 else "A") if proto == "TCP" else "-",
                    int(rng.integers(1, 250)),
                )
            )
        for sec in sorted(rng.integers(0, 60, size=rng.poisson(4)).tolist()):
            ts = minute + timedelta(seconds=sec)
            if rng.random() < 0.5:
                ids_lines.append(ids_line(ts, "Attempted Information Leak", 2, int(rng.integers(1, 250))))
            else:
                ids_lines.append(ids_line(ts, "Potential Corporate Privacy Violation", 3, int(rng.integers(1, 250))))
        if burst_at <= i < burst_at + burst_len:
            for k in range(burst_fw):
                line = fw_line(minute + timedelta(seconds=k % 60), "Drop", "SCTP", 6667, "FPU", 100 + k)
                fw_lines.append(line)
                planted.add(line)
            for k in range(burst_ids):
                line = ids_line(minute + timedelta(seconds=5 * k % 60), "ET SCAN VNC scan attempt", 1, 100 + k)
                ids_lines.append(line)
                planted.add(line)
    fw_path = directory / "firewall.log"
    ids_path = directory / "ids.log"
    fw_path.write_text("\n".join(fw_lines) + "\n")
    ids_path.write_text("\n".join(ids_lines) + "\n")
    return Scenario(
        fw_path=fw_path,
        ids_path=ids_path,
        burst_start=T0 + timedelta(minutes=burst_at),
        burst_end=T0 + timedelta(minutes=burst_at + burst_len - 1),
        planted=planted,
        n_lines=len(fw_lines) + len(ids_lines),
    )


@pytest.fixture
def scenario(tmp_path) -> Scenario:
    logs = tmp_path / "logs"
    logs.mkdir()
    return make_scenario(logs)


@pytest.fixture(autouse=True)
def _reset_logging():
    """CLI tests configure structlog against the captured stderr; undo it after each test."""
    yield
    structlog.reset_defaults()
