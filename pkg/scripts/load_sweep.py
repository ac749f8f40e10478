"""One hub node publishes to 35 receivers; sweep how many messages each
interest gets (1 to 35) and compare the protocols."""

import sys

from _common import sweep_main

if __name__ == "__main__":
    sys.exit(sweep_main("loadsweep", "msg_int"))
