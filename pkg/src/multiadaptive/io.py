"""CSV and log output helpers. Files are written to a temp name and renamed."""

from __future__ import annotations

import contextlib
import csv
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

OUT_ENV = "MULTIADAPTIVE_OUT"


@contextlib.contextmanager
def atomic_writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with atomic_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_text(path, lines: Iterable[str]) -> None:
    with atomic_writer(path) as fh:
        for line in lines:
            fh.write(line.rstrip("\n") + "\n")


def _fmt(x):
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return x


def write_step_sizes(sol, path) -> None:
    """Per-element steps: component, t_begin, t_end, k, r."""
    rows = []
    for i in range(sol.N):
        for e in sol.elements(i):
            rows.append((i, e.t0, e.t1, e.k, float(e.r)))
    write_csv(path, ["component", "t_begin", "t_end", "k", "r"], rows)
