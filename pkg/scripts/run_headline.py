#!/usr/bin/env python3
"""Run the full headline pipeline and print the summary.

Equivalent to `ffdrive --config configs/default.cfg reproduce`, kept as a
script entry point for batch experimentation.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ffdrive.cli import main  # noqa: E402

if __name__ == "__main__":
    config = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"
    sys.exit(main(["--config", str(config), "reproduce", *sys.argv[1:]]))
