import sqlite3
from datetime import datetime, timedelta

import pytest

from acbounds.cache.database import SCHEMA_VERSION, LambdaPointStore
from acbounds.cache.exceptions import DatabaseError


def test_points_follow_their_sweep(tmp_path):
    store = LambdaPointStore(tmp_path / "cache.db")
    now = datetime.now()
    store.insert_sweep("p1", "hash", 3, now)
    assert store.store_points("p1", [("c:0.5", '{"lambda": 0.5}'), ("c:0.75", '{"lambda": 0.75}')], now) == 2

    sweep = store.fetch_sweep("p1")
    assert sweep["solved_points"] == 2
    assert sweep["start_time"] == now
    assert store.load_points("p1") == {"c:0.5": '{"lambda": 0.5}', "c:0.75": '{"lambda": 0.75}'}

    assert store.delete_stale(now + timedelta(seconds=1)) == 1
    assert store.fetch_sweep("p1") is None
    assert store.load_points("p1") == {}


def test_latest_running_sweep(tmp_path):
    store = LambdaPointStore(tmp_path / "cache.db")
    start = datetime(2026, 1, 1, 12, 0, 0)
    store.insert_sweep("old", "hash", 1, start)
    store.insert_sweep("new", "hash", 1, start + timedelta(minutes=5))
    assert store.latest_running("hash")["process_id"] == "new"
    store.set_status("new", "completed", start + timedelta(minutes=6))
    assert store.latest_running("hash")["process_id"] == "old"
    assert store.latest_running("other") is None


def test_schema_version_is_recorded_and_checked(tmp_path):
    path = tmp_path / "cache.db"
    LambdaPointStore(path)
    conn = sqlite3.connect(path)
    assert conn.execute("PRAGMA user_version").fetchone()[0] == SCHEMA_VERSION
    conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION + 1}")
    conn.commit()
    conn.close()
    with pytest.raises(DatabaseError):
        LambdaPointStore(path)
