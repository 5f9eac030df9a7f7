#!/usr/bin/env python3
"""Entry point for running the LCCS adaptation CLI from a source checkout."""

import sys
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Add src to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from lccs_adapt.cli import main

if __name__ == "__main__":
    main()
