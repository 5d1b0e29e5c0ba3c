import logging
import sys

from ppf_lab.core.config import LOG_LEVEL, OUTPUT_DIR

# Configure logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

if __name__ == "__main__":
    try:
        OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        logger.debug("Default output root: %s", OUTPUT_DIR)

        from ppf_lab.main import main

        main()
    except SystemExit:
        raise
    except Exception as e:  # noqa: BLE001
        logger.error("Error running ppf-lab: %s", e, exc_info=True)
        sys.exit(1)
