"""Uniform vs desynchronized population under a reference step, power peaks compared."""

import sys

from tclflock.cli import main

if __name__ == "__main__":
    sys.exit(main(["compare-desync", "fig2_desync", *sys.argv[1:]]))
