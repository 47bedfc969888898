"""Environment handling: ``.env`` discovery for logfire tokens and run switches."""

import os
from pathlib import Path
from typing import Optional

from dotenv import find_dotenv, load_dotenv

# logging
import logging
import logfire
logging.basicConfig(handlers=[logfire.LogfireLoggingHandler()])
logger = logging.getLogger(__name__)


def load_environment(start: Optional[Path] = None) -> Optional[Path]:
    """Load the nearest .env file, starting from ``start`` or the working directory.

    Returns:
        Path of the loaded file, or None when there is none
    """
    env_path = Path(start or os.getcwd()) / '.env'
    if env_path.exists():
        load_dotenv(env_path)
        logger.info(f"Loaded .env from: {env_path}")
        return env_path

    dotenv_path = find_dotenv(usecwd=True)
    if dotenv_path:
        load_dotenv(dotenv_path)
        logger.info(f"Loaded .env from: {dotenv_path}")
        return Path(dotenv_path)

    logger.debug(f"No .env file found in {env_path.parent} or parent directories")
    return None


def logfire_token_present() -> bool:
    """Whether a logfire write token is set, from the shell or a loaded .env."""
    return bool(os.getenv("LOGFIRE_TOKEN"))
