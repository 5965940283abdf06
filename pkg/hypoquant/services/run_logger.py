"""Structured JSON-lines log of one CLI run."""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional
from uuid import uuid4


class RunLogger:
    """Writes one JSON object per event to <output>/run.log."""

    def __init__(self, output_dir: Path, command: str, run_id: Optional[str] = None):
        self.run_id = run_id or uuid4().hex[:12]
        self.command = command
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.log_file = self.output_dir / "run.log"
        self.logger = logging.getLogger(f"run.{command}")

    def log_structured(self, event_type: str, data: Dict[str, Any], level: str = "INFO") -> None:
        """Append a structured JSON event."""
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "run_id": self.run_id,
            "command": self.command,
            "type": event_type,
            "level": level,
            **data,
        }
        with open(self.log_file, "a", encoding="utf-8") as f:
            f.write(json.dumps(log_entry, ensure_ascii=False, default=str) + "\n")
        self.logger.log(logging.getLevelName(level), data.get("message", event_type))

    def log_run_started(self, options: Dict[str, Any]) -> None:
        self.log_structured("run_started", {
            "options": options,
            "message": f"Started {self.command}",
        })

    def log_dataset_loaded(self, manifest: str, subjects: int, labeled: bool) -> None:
        self.log_structured("dataset_loaded", {
            "manifest": manifest,
            "subjects": subjects,
            "labeled": labeled,
            "message": f"Loaded {subjects} subjects from {manifest}",
        })

    def log_progress(self, stage: str, done: int, total: int) -> None:
        self.log_structured("progress_update", {
            "stage": stage,
            "done": done,
            "total": total,
            "message": f"{stage}: {done}/{total}",
        }, level="DEBUG")

    def log_threshold_selected(self, mode: str, threshold: float, details: Dict[str, Any]) -> None:
        self.log_structured("threshold_selected", {
            "mode": mode,
            "threshold": threshold,
            **details,
            "message": f"{mode} threshold {threshold:.6g}",
        })

    def log_model_fitted(self, rows: int, length: int, components: int, retained: int) -> None:
        self.log_structured("model_fitted", {
            "rows": rows,
            "length": length,
            "components": components,
            "retained": retained,
            "message": f"Eigen model on {rows}x{length}: retained {retained} of {components}",
        })

    def log_outputs_written(self, files: List[Path]) -> None:
        self.log_structured("outputs_written", {
            "files": [p.name for p in files],
            "message": f"Wrote {len(files)} result files",
        })

    def log_error(self, error: BaseException) -> None:
        self.log_structured("error", {
            "error_type": type(error).__name__,
            "error": str(error),
            "message": f"{self.command} failed: {error}",
        }, level="ERROR")

    def log_run_completed(self, duration_seconds: float) -> None:
        self.log_structured("run_completed", {
            "duration_seconds": round(duration_seconds, 3),
            "message": f"{self.command} completed in {duration_seconds:.2f}s",
        })
