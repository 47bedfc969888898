"""Process-level cache handling for the CLI."""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click

from acbounds.utils.get_hash import get_hash
from .manager import CACHE_DB_NAME, CacheManager, resolve_cache_dir


def get_cache_manager(cache_dir: Optional[Path] = None) -> CacheManager:
    return CacheManager(cache_dir)


def setup_cache_handling(
    sweep_identity: Dict[str, Any],
    cache_enabled: bool,
    process_id: Optional[str],
    auto_resume: bool,
    total_points: int,
    cache_dir: Optional[Path] = None,
) -> Tuple[Optional[str], Optional[CacheManager], Dict[str, Dict[str, Any]]]:
    """Set up caching for one sweep.

    Args:
        sweep_identity: Everything that determines the per-λ results (weight, δ, radius, grid, scan mode)
        cache_enabled: Whether caching is enabled
        process_id: Process ID to resume explicitly
        auto_resume: Offer to resume the latest unfinished process with the same identity
        total_points: Number of λ points of the first pass
        cache_dir: Cache location, ``.acbounds/cache`` under the working directory by default

    Returns:
        Tuple of (process ID, cache manager, cached rows by lambda key)
    """
    if not cache_enabled:
        return None, None, {}

    cache_manager = get_cache_manager(cache_dir)
    config_hash = get_hash(sweep_identity)

    if not process_id and auto_resume:
        if unfinished_process := cache_manager.find_unfinished_process(config_hash):
            click.echo(cache_manager.get_process_summary(unfinished_process))
            if click.confirm("Would you like to resume this sweep?"):
                process_id = unfinished_process.process_id

    if not process_id:
        process_id = cache_manager.start_process(config_hash, total_points)
    else:
        status = cache_manager.get_process_status(process_id)
        if status is None:
            raise click.BadParameter(f"No cached process with id {process_id}", param_hint='--resume')
        if status.config_hash != config_hash:
            raise click.BadParameter(
                f"Process {process_id} was started with a different configuration", param_hint='--resume'
            )
        cache_manager.resume_process(process_id)

    return process_id, cache_manager, cache_manager.get_cached_results(process_id)


def handle_cache_cleanup(cache_dir: Optional[Path] = None) -> None:
    """Clean up cache by removing the cache database file."""
    try:
        db_path = resolve_cache_dir(cache_dir) / CACHE_DB_NAME
        removed = False
        for path in (db_path, db_path.with_name(db_path.name + '-wal'), db_path.with_name(db_path.name + '-shm')):
            if path.exists():
                path.unlink()
                removed = True
        click.echo("Cache database deleted successfully!" if removed else "No cache database found.")
    except Exception as e:
        click.echo(f"Error cleaning cache: {e}", err=True)
