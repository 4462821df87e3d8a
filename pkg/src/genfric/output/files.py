"""Atomic file replacement shared by every writer."""

import os
import tempfile
from pathlib import Path


def atomic_write(path: Path, content: str | bytes) -> Path:
    """Write ``content`` to a temp file next to ``path``, then rename it over ``path``.

    Args:
        path: Destination file
        content: Text (written as UTF-8) or bytes

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = content.encode("utf-8") if isinstance(content, str) else content
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path
