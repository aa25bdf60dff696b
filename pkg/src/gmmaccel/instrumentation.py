"""Counters used by the test suite to audit per-iteration work.

A "sweep" is one evaluation of all component densities over the full
dataset (the dominant cost of every EM-family iteration).  Production code
only increments the counter; nothing reads it outside of tests.
"""


class SweepCounter:
    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def bump(self, n=1):
        self.count += n

    def reset(self):
        self.count = 0


#: Process-wide counter of dataset-sized density sweeps.  Not synchronized;
#: intended for single-threaded test instrumentation only.
sweeps = SweepCounter()
