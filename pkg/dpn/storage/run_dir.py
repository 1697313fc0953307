import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from dpn.config.schema import RunConfig
from dpn.config.settings import settings

logger = logging.getLogger(__name__)


class RunDirectory:
    """<runs_dir>/<name>/ holding config.json, checkpoints/, train.log.jsonl and outputs/."""

    def __init__(self, name: str, runs_dir: Optional[str] = None):
        self.root = Path(runs_dir or settings.runs_dir) / name

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def log_path(self) -> Path:
        return self.root / "train.log.jsonl"

    @property
    def outputs(self) -> Path:
        return self.root / "outputs"

    def create(self, config: RunConfig) -> "RunDirectory":
        self.checkpoints.mkdir(parents=True, exist_ok=True)
        self.outputs.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(config.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Run directory: {self.root}")
        return self


class JsonlLog:
    """Append-only line-delimited JSON records."""

    def __init__(self, path: Optional[Path]):
        self.path = Path(path) if path else None

    def write(self, record: Dict[str, Any]):
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")
