"""Exceptions for the cache system."""

from acbounds.exceptions import AcboundsError, ValidationError


class CacheError(AcboundsError):
    """Base exception for cache-related errors."""
    pass

class DatabaseError(CacheError):
    """Exception for database operation failures."""
    pass


__all__ = ['CacheError', 'DatabaseError', 'ValidationError']
