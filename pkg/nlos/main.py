"""
EventNLOS command line entry point
Synthetic event-based passive non-line-of-sight imaging toolkit
"""

import logging
import sys
from typing import List, Optional

import typer
from dotenv import load_dotenv

from core.exceptions import handle_cli_error
from core.logging_config import setup_logging
from cli.router import app

# Load environment variables
load_dotenv()

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)


def run(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code (0 ok, 1 unexpected error, 2 usage or toolkit error)"""
    try:
        # standalone_mode=False hands Exit codes back instead of calling sys.exit
        result = app(args=argv, prog_name="eventnlos", standalone_mode=False)
    except typer.Exit as e:
        return e.exit_code
    except typer.Abort:
        logger.info("Aborted")
        return 1
    except Exception as e:
        return handle_cli_error(e)
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(run())
