"""RunManifest: what a subcommand read, how long each step took, and what it counted."""

from __future__ import annotations

import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from pydantic import BaseModel, Field

from mbda import __version__


class InputFile(BaseModel):
    path: str
    size: int | None = Field(None, description="Bytes on disk; None when the file is missing")


class RunManifest(BaseModel):
    tool_version: str = __version__
    command: str
    config_digest: str
    inputs: list[InputFile] = Field(default_factory=list)
    timings: dict[str, float] = Field(default_factory=dict, description="Seconds per step")
    counts: dict[str, int] = Field(default_factory=dict)

    def add_input(self, path: str | Path) -> None:
        try:
            size: int | None = os.path.getsize(path)
        except OSError:
            size = None
        self.inputs.append(InputFile(path=str(path), size=size))

    @contextmanager
    def step(self, name: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - t0, 6)

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path
