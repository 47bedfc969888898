"""Manager for cached per-λ results of a sweep."""

import json
import os
import uuid
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from .database import LambdaPointStore
from .models import ProcessStatus
from acbounds.utils.validators import validate_string, validate_int

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = Path('.acbounds') / 'cache'
CACHE_DB_NAME = "cache.db"


def resolve_cache_dir(cache_dir: Optional[Path] = None) -> Path:
    return Path(cache_dir) if cache_dir else Path(os.getcwd()) / DEFAULT_CACHE_DIR


def lambda_key(chunk_id: str, lam: float) -> str:
    """Cache key of one grid point of a chunk; repr keeps every bit of λ."""
    return f"{chunk_id}:{float(lam)!r}"


class CacheManager:
    """Stores solved λ points per process so interrupted sweeps can resume.

    Writes go straight to SQLite from the driver process; workers never touch
    the database.
    """

    def __init__(self, cache_dir: Optional[Path] = None, auto_cleanup_days: int = 30) -> None:
        self.cache_dir = resolve_cache_dir(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = self.cache_dir / CACHE_DB_NAME
        self.auto_cleanup_days = auto_cleanup_days
        self.db = LambdaPointStore(self.db_path)
        self._cleanup_old_processes()

    def start_process(self, config_hash: str, total_points: int) -> str:
        """Start a new process and return its ID."""
        validate_string(config_hash, "Config hash")
        validate_int(total_points, "Total points")

        process_id = str(uuid.uuid4())
        self.db.insert_sweep(process_id, config_hash, total_points, datetime.now())
        return process_id

    def cache_results(self, process_id: str, chunk_id: str, rows: Iterable[Dict[str, Any]]) -> None:
        """Store the summary rows of a solved chunk, block diagnostics included."""
        validate_string(process_id, "Process ID")
        validate_string(chunk_id, "Chunk ID")
        records = [(lambda_key(chunk_id, row["lambda"]), json.dumps(row)) for row in rows]
        self.db.store_points(process_id, records, datetime.now())

    def get_cached_results(self, process_id: str) -> Dict[str, Dict[str, Any]]:
        """All cached rows of a process keyed by :func:`lambda_key`."""
        validate_string(process_id, "Process ID")
        return {key: json.loads(row) for key, row in self.db.load_points(process_id).items()}

    def get_process_status(self, process_id: str) -> Optional[ProcessStatus]:
        validate_string(process_id, "Process ID")
        record = self.db.fetch_sweep(process_id)
        return ProcessStatus(**record) if record else None

    def find_unfinished_process(self, config_hash: str) -> Optional[ProcessStatus]:
        """Find the most recent unfinished process for a config hash."""
        validate_string(config_hash, "Config hash")
        record = self.db.latest_running(config_hash)
        return ProcessStatus(**record) if record else None

    def get_process_summary(self, process: ProcessStatus) -> str:
        """Get a human-readable summary of a process."""
        time_diff = datetime.now() - process.last_updated
        if time_diff.days > 0:
            time_ago = f"{time_diff.days} days ago"
        elif time_diff.seconds > 3600:
            time_ago = f"{time_diff.seconds // 3600} hours ago"
        else:
            time_ago = f"{time_diff.seconds // 60} minutes ago"

        return (
            f"\nFound unfinished sweep from {time_ago}\n"
            f"Progress: {process.solved_points}/{process.total_points} lambda points "
            f"({process.progress:.1f}%)"
        )

    def mark_process_completed(self, process_id: str) -> None:
        validate_string(process_id, "Process ID")
        self.db.set_status(process_id, 'completed', datetime.now())

    def resume_process(self, process_id: str) -> None:
        validate_string(process_id, "Process ID")
        self.db.set_status(process_id, 'running', datetime.now())

    def _cleanup_old_processes(self) -> None:
        try:
            self.cleanup_old_processes(self.auto_cleanup_days)
        except Exception as e:
            logger.error(f"Error during automatic cache cleanup: {e}")

    def cleanup_old_processes(self, days: int = 30) -> int:
        """Delete processes not touched for ``days`` days; returns how many went."""
        validate_int(days, "Days")
        removed = self.db.delete_stale(datetime.now() - timedelta(days=days))
        if removed > 0:
            logger.info(f"Cleaned up {removed} old processes from cache")
        return removed
