"""Console entry point."""

import logging
import sys

from hypoquant.config import settings
from hypoquant.presentation.cli import run

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    logging.basicConfig(
        level=logging.INFO if not settings.debug else logging.DEBUG,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler(sys.stderr),
        ],
    )


def main() -> None:
    configure_logging()
    logger.debug(f"{settings.app_name} {settings.app_version}")
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
