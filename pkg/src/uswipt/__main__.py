"""``python3 -m uswipt`` entry point."""

import sys

from .runner.cli import main

sys.exit(main())
