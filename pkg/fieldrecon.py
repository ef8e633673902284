#!/usr/bin/env python3
"""
Field reconstruction command line

Runs the `field-recon` commands from a source checkout:

    python fieldrecon.py synth --out generated/desk --preset desk --af 8
"""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
