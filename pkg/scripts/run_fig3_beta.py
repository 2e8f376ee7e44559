"""Agent-only run followed by the beta grid search on the recorded switching flux."""

import sys

from tclflock.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "fig3_beta", *sys.argv[1:]]))
