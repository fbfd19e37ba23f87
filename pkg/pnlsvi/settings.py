# settings.py
"""Process-wide defaults read from the environment (and an optional .env)."""
import logging
import os

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logging.getLogger(__name__).warning("Ignoring non-integer %s=%r", name, raw)
        return default


def enumeration_cap() -> int:
    """Largest finite class (member count) the package will enumerate."""
    return _int_env("PNLSVI_ENUMERATION_CAP", 1_000_000)


def pair_budget() -> int:
    """Largest number of member pairs a brute-force supremum may visit."""
    return _int_env("PNLSVI_PAIR_BUDGET", 10_000_000)


def worker_count() -> int:
    return max(1, _int_env("PNLSVI_WORKERS", 1))


def default_config_path() -> str | None:
    return os.getenv("PNLSVI_CONFIG_PATH") or None


def configure_logging(level: str | None = None) -> None:
    level_name = (level or os.getenv("PNLSVI_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(format=LOG_FORMAT, level=getattr(logging, level_name, logging.INFO))
