"""Small helpers for sidecar metadata files.

Sidecars are line-delimited ``key=value`` text files written next to binary
artifacts (I/Q captures, spectrogram matrices) so every file is
self-describing without a database.
"""

from __future__ import annotations

from pathlib import Path


def write_sidecar(path: str | Path, fields: dict) -> None:
    """Write ``key=value`` lines; values are stringified as-is."""
    lines = [f"{k}={v}" for k, v in fields.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sidecar(path: str | Path) -> dict[str, str]:
    """Read ``key=value`` lines back into a string dict."""
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
