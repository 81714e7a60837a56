"""Passive Bluetooth classic device-type fingerprinting.

Captures are parsed into timestamped packet records, filtered by protocol and
length, reduced to a 300-bin inter-arrival-time density signature, and
classified by whichever learner wins the (algorithm x filter) election.
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
