#!/usr/bin/env python3
"""
cbfland CLI launcher

Runs the typer application from a source checkout without installing the
package:

    python cli.py run scenario1
    python cli.py validate
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from cbfland_cli.cli import app  # noqa: E402

if __name__ == "__main__":
    app(prog_name="cbfland")
