"""
Main entry point for the qcts command-line toolkit.
"""
import sys
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
# Use explicit path to ensure .env is found regardless of working directory
env_path = Path(__file__).parent / ".env"
load_dotenv(dotenv_path=env_path)

from qcts import cli  # noqa: E402

if __name__ == "__main__":
    sys.exit(cli.main())
