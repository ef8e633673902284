"""
Run observer

Collects per-iteration loss records of a reconstruction, writes the loss
trace and dumps diagnostics when a run aborts.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..core.models import LossRecord
from .logger import get_contextual_logger

log = get_contextual_logger("observer")

TRACE_COLUMNS = ["iteration", "data", "tv_x", "tv_t", "coil", "total", "lr"]


class RunObserver:
    """Track the loss trace of one reconstruction run"""

    def __init__(self, run_name: str = "reconstruction", log_every: int = 50):
        self.run_name = run_name
        self.log_every = max(1, log_every)
        self.records: List[LossRecord] = []

    def record(self, entry: LossRecord) -> None:
        self.records.append(entry)
        if entry.iteration % self.log_every == 0:
            log.info(
                f"[{self.run_name}] iter {entry.iteration}: data {entry.data:.4e}, "
                f"total {entry.total:.4e}, lr {entry.lr:.2e}"
            )

    @property
    def last(self) -> Optional[LossRecord]:
        return self.records[-1] if self.records else None

    def summary(self) -> Dict[str, Any]:
        if not self.records:
            return {"run": self.run_name, "iterations": 0}
        data = [r.data for r in self.records]
        return {
            "run": self.run_name,
            "iterations": len(self.records),
            "initial_data_loss": data[0],
            "final_data_loss": data[-1],
            "best_data_loss": min(data),
            "final_lr": self.records[-1].lr,
            "skipped_steps": sum(r.skipped for r in self.records),
        }

    def write_trace_csv(self, path: Union[str, Path]) -> Path:
        """One row per iteration; terms that were not evaluated are left empty"""
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                row = r.model_dump()
                writer.writerow(
                    ["" if row[c] is None else repr(row[c]) for c in TRACE_COLUMNS]
                )
        log.debug(f"Wrote {len(self.records)} trace rows to {out}")
        return out

    def dump_diagnostics(
        self, directory: Union[str, Path], details: Dict[str, Any]
    ) -> Path:
        """Write the trace so far plus failure details for post-mortem inspection"""
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        self.write_trace_csv(target / "loss_trace.csv")
        payload = {"summary": self.summary(), **_jsonable(details)}
        path = target / "diagnostics.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        log.child(self.run_name).error("Diagnostics written to %s", path)
        return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, np.integer):
        return int(value)
    return value
