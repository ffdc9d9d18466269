"""Access to the data files bundled with the package."""

from pathlib import Path

_DATA_ROOT = Path(__file__).parent / "data"


def data_path(*parts: str) -> Path:
    path = _DATA_ROOT.joinpath(*parts)
    if not path.exists():
        raise FileNotFoundError(f"bundled data file missing: {path}")
    return path
