"""SQLite store for solved λ points, one row per (sweep, grid point)."""

import sqlite3
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Generator, Iterable, Optional, Tuple

from .exceptions import DatabaseError

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
LOCK_RETRIES = 3
LOCK_TIMEOUT = 30.0

SCHEMA = '''
    CREATE TABLE IF NOT EXISTS sweeps (
        process_id TEXT PRIMARY KEY,
        config_hash TEXT NOT NULL,
        start_time TEXT NOT NULL,
        last_updated TEXT NOT NULL,
        status TEXT NOT NULL CHECK(status IN ('running', 'completed')),
        total_points INTEGER NOT NULL CHECK(total_points >= 0),
        solved_points INTEGER NOT NULL DEFAULT 0 CHECK(solved_points >= 0)
    );

    CREATE TABLE IF NOT EXISTS lambda_points (
        process_id TEXT NOT NULL REFERENCES sweeps(process_id) ON DELETE CASCADE,
        lambda_key TEXT NOT NULL,
        row TEXT NOT NULL,
        PRIMARY KEY (process_id, lambda_key)
    );

    CREATE INDEX IF NOT EXISTS idx_sweeps_running ON sweeps(config_hash, status, last_updated);
'''

# a point record is (lambda key, JSON row)
PointRecord = Tuple[str, str]


def _sweep_row(row: Optional[sqlite3.Row]) -> Optional[Dict[str, Any]]:
    if row is None:
        return None
    record = dict(row)
    record['start_time'] = datetime.fromisoformat(record['start_time'])
    record['last_updated'] = datetime.fromisoformat(record['last_updated'])
    return record


class LambdaPointStore:
    """Sweeps and their solved λ points in one SQLite file.

    Timestamps are stored as ISO text. Each public method runs in its own
    transaction; a locked database is retried ``LOCK_RETRIES`` times.
    """

    def __init__(self, db_path: Path):
        self.db_path = Path(db_path)
        with self.transaction() as conn:
            version = conn.execute("PRAGMA user_version").fetchone()[0]
            if version not in (0, SCHEMA_VERSION):
                raise DatabaseError(f"Cache schema version {version} at {self.db_path} is not supported")
            conn.executescript(SCHEMA)
            conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")

    @contextmanager
    def transaction(self) -> Generator[sqlite3.Connection, None, None]:
        """Connection with foreign keys on, committed on success and always closed."""
        for attempt in range(1, LOCK_RETRIES + 1):
            try:
                conn = sqlite3.connect(self.db_path, timeout=LOCK_TIMEOUT)
            except sqlite3.OperationalError as e:
                if attempt == LOCK_RETRIES:
                    raise DatabaseError(f"Cannot open cache database {self.db_path}: {e}")
                logger.warning(f"Opening the cache database failed (attempt {attempt}), retrying")
                continue
            conn.row_factory = sqlite3.Row
            conn.execute("PRAGMA foreign_keys = ON")
            try:
                with conn:
                    yield conn
                return
            except sqlite3.OperationalError as e:
                raise DatabaseError(f"Cache database error: {e}")
            finally:
                conn.close()

    def insert_sweep(self, process_id: str, config_hash: str, total_points: int, now: datetime) -> None:
        with self.transaction() as conn:
            conn.execute(
                "INSERT INTO sweeps (process_id, config_hash, start_time, last_updated, status, total_points) "
                "VALUES (?, ?, ?, ?, 'running', ?)",
                (process_id, config_hash, now.isoformat(), now.isoformat(), total_points),
            )

    def store_points(self, process_id: str, records: Iterable[PointRecord], now: datetime) -> int:
        """Upsert point rows and advance the sweep's solved count; returns how many were written."""
        records = [(process_id, key, row) for key, row in records]
        with self.transaction() as conn:
            conn.executemany(
                "INSERT OR REPLACE INTO lambda_points (process_id, lambda_key, row) VALUES (?, ?, ?)",
                records,
            )
            conn.execute(
                "UPDATE sweeps SET solved_points = solved_points + ?, last_updated = ? WHERE process_id = ?",
                (len(records), now.isoformat(), process_id),
            )
        return len(records)

    def load_points(self, process_id: str) -> Dict[str, str]:
        with self.transaction() as conn:
            rows = conn.execute(
                "SELECT lambda_key, row FROM lambda_points WHERE process_id = ?", (process_id,)
            ).fetchall()
        return {row['lambda_key']: row['row'] for row in rows}

    def fetch_sweep(self, process_id: str) -> Optional[Dict[str, Any]]:
        with self.transaction() as conn:
            row = conn.execute("SELECT * FROM sweeps WHERE process_id = ?", (process_id,)).fetchone()
        return _sweep_row(row)

    def latest_running(self, config_hash: str) -> Optional[Dict[str, Any]]:
        with self.transaction() as conn:
            row = conn.execute(
                "SELECT * FROM sweeps WHERE config_hash = ? AND status = 'running' "
                "ORDER BY last_updated DESC LIMIT 1",
                (config_hash,),
            ).fetchone()
        return _sweep_row(row)

    def set_status(self, process_id: str, status: str, now: datetime) -> None:
        with self.transaction() as conn:
            conn.execute(
                "UPDATE sweeps SET status = ?, last_updated = ? WHERE process_id = ?",
                (status, now.isoformat(), process_id),
            )

    def delete_stale(self, cutoff: datetime) -> int:
        """Drop sweeps last touched before ``cutoff``; their points go with them."""
        with self.transaction() as conn:
            return conn.execute("DELETE FROM sweeps WHERE last_updated < ?", (cutoff.isoformat(),)).rowcount
