"""Closed-loop demand step (0.41 -> 0.47 at t = 15) with N = 1000 loads."""

import sys

from tclflock.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "fig4_step", *sys.argv[1:]]))
