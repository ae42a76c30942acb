import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from cross_spline_lab import __version__

TOOL_NAME = "cross-spline-lab"
FAILURE_MARKER = "FAILED"


def config_hash(config: dict) -> str:
    """Short, stable hash of a configuration mapping
    Args:
        config (dict): JSON-serializable configuration
    Returns:
        str: first 12 hex digits of the sha256 of its canonical JSON
    """
    canonical = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def file_sha256(path: str | Path) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def provenance_line(cfg_hash: str | None) -> str:
    """First line of every CSV written by the tool"""
    return f"# {TOOL_NAME} {__version__} config={cfg_hash or 'none'}\n"


def write_csv(frame: pd.DataFrame, path: str | Path, cfg_hash: str | None = None,
              float_format: str = "%.10g") -> Path:
    """Write a table preceded by the provenance comment line
    Args:
        frame (pd.DataFrame): table to write
        path (str | Path): destination
        cfg_hash (str | None): hash of the producing configuration
        float_format (str): printf-style float format, fixed so reruns are byte-identical
    Returns:
        Path: the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(provenance_line(cfg_hash))
        frame.to_csv(f, index=False, float_format=float_format, lineterminator="\n")
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    """Read a CSV written by write_csv (skips the provenance line)"""
    return pd.read_csv(path, comment="#")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_json(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_failure_marker(output_dir: str | Path, error: BaseException) -> Path:
    """Leave a FAILED file next to whatever partial artifacts a run produced"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    marker = output_dir / FAILURE_MARKER
    marker.write_text(f"{type(error).__name__}: {error}\n")
    return marker


def format_duration(seconds: float) -> str:
    """Format a duration in seconds to a human-readable string
    Args:
        seconds (float): elapsed time
    Returns:
        str: e.g. "850 ms", "12.3 s", "4m 05s", "2h 03m"
    """
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    if seconds < 60:
        return f"{seconds:.1f} s"
    minutes, secs = divmod(int(round(seconds)), 60)
    if minutes < 60:
        return f"{minutes}m {secs:02d}s"
    hours, minutes = divmod(minutes, 60)
    return f"{hours}h {minutes:02d}m"


def format_size(size_bytes: int) -> str:
    """Format size in bytes to a human-readable string
    Args:
        size_bytes (int): Size in bytes
    Returns:
        str: Formatted size string
    """
    if size_bytes == 0:
        return "0 B"

    size_names = ["B", "KB", "MB", "GB", "TB"]
    i = 0
    while size_bytes >= 1024 and i < len(size_names) - 1:
        size_bytes /= 1024.0
        i += 1

    return f"{size_bytes:.1f} {size_names[i]}"
