"""Delivery, cost and latency of the four protocols as message TTL grows
from one day to three weeks, on the 30-node community trace."""

import sys

from _common import sweep_main

if __name__ == "__main__":
    sys.exit(sweep_main("ttlsweep", "ttl"))
