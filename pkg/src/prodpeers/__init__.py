"""Product/service extraction from company summaries and product-overlap peer groups."""

from pathlib import Path

__version__ = "0.1.0"

_DATA_DIR = Path(__file__).parent / "data"


def data_path(name: str = "") -> Path:
    """Path to a bundled fixture file (corpus, cache snapshot, recordings)."""
    return _DATA_DIR / name
