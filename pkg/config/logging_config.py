import logging
import sys
from pathlib import Path
from typing import Optional, Union

from config.settings import LOG_DIR, LOG_LEVEL


def setup_logging(level: Union[str, int] = LOG_LEVEL, log_dir: Optional[Path] = None) -> logging.Logger:
    # Create logs directory if it doesn't exist
    log_dir = Path(log_dir) if log_dir is not None else LOG_DIR
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.FileHandler(log_dir / "frad.log"),
            logging.StreamHandler(sys.stderr),
        ],
        force=True,
    )

    return logging.getLogger("frad")
