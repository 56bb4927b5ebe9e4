"""Line-delimited SMILES files: UTF-8, one molecule per line, ``#`` comments."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable


def read_smiles_file(path: str | Path) -> list[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            out.append(line.split()[0])
    return out


def write_smiles_file(path: str | Path, smiles: Iterable[str], header: str | None = None) -> None:
    path = Path(path)
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.extend(smiles)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)
