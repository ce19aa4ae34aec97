#!/usr/bin/env python3
"""
Main entry point for evoloss
"""
import logging
import sys
import os

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from evoloss.ui.cli import main as cli_main

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(),
    ]
)

logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """Main function to run an evoloss command"""
    try:
        return cli_main(argv)
    except KeyboardInterrupt:
        logger.error("Interrupted; rerun train with --resume to continue from the last checkpoint")
        return 1


if __name__ == "__main__":
    sys.exit(main())
