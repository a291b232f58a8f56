import logging
import os

from dotenv import load_dotenv

# THADMM_* variables may come from a .env file in the working directory
load_dotenv()

OUT_DIR = os.getenv("THADMM_OUT_DIR", "runs")
CHECKPOINT = os.getenv("THADMM_CHECKPOINT")
LOG_LEVEL = os.getenv("THADMM_LOG_LEVEL", "INFO").upper()


def debug_checks_enabled() -> bool:
    # read on every call so tests can flip it through the environment
    return os.getenv("THADMM_DEBUG_CHECKS", "0").strip().lower() in ("1", "true", "yes")


def configure_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
