"""
Cache for acbounds sweeps.
Stores solved λ grid points so long runs can be resumed.
"""

from .exceptions import CacheError, DatabaseError, ValidationError
from .models import ProcessStatus
from .process import (
    get_cache_manager,
    handle_cache_cleanup,
    setup_cache_handling,
)
from .manager import CacheManager, lambda_key

__all__ = [
    'CacheManager',
    'get_cache_manager',
    'lambda_key',
    'handle_cache_cleanup',
    'setup_cache_handling',
    'ProcessStatus',
    'CacheError',
    'DatabaseError',
    'ValidationError'
]
