"""
Machine-readable reports as JSON lines.

One JSON object per line, each tagged with a ``"report"`` kind. Numpy
scalars are converted, non-finite floats become the strings ``"inf"``,
``"-inf"`` and ``"nan"`` so every line stays strict JSON.
"""
import json
import math
import sys
from pathlib import Path
from typing import IO, Any, Dict, Optional, Union

import numpy as np


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Path):
        return str(value)
    return value


class ReportWriter:
    """
    Appends JSON-lines records to a file or a stream (stdout by default).

    Example:
        >>> with ReportWriter("bench.jsonl") as out:
        ...     out.write("bench", report.to_dict())
    """

    def __init__(self, target: Optional[Union[str, Path, IO[str]]] = None):
        self._owned = False
        if target is None:
            self._stream: IO[str] = sys.stdout
        elif isinstance(target, (str, Path)):
            Path(target).parent.mkdir(parents=True, exist_ok=True)
            self._stream = open(target, "a", encoding="utf-8")
            self._owned = True
        else:
            self._stream = target
        self.count = 0

    def write(self, kind: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        record = {"report": kind}
        record.update(_clean(payload))
        self._stream.write(json.dumps(record, sort_keys=False) + "\n")
        self._stream.flush()
        self.count += 1
        return record

    def close(self) -> None:
        if self._owned:
            self._stream.close()
            self._owned = False

    def __enter__(self) -> "ReportWriter":
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.close()


def read_reports(path: Union[str, Path]) -> list:
    """Parse a JSON-lines report file."""
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
