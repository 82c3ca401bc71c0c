"""Floating-point operation counters.

Counts are kept separately for complex multiplications and additions and
reported in real-flop equivalents: a complex multiplication costs 6 real
flops (4 multiplies + 2 adds) and a complex addition costs 2.  Counts are
recorded at the call sites of the block updates from the array dimensions
actually touched, so they reflect the work the structured algorithms do,
not per-scalar instrumentation overhead.
"""

MUL_FLOPS = 6
ADD_FLOPS = 2


class FlopCounter:
    __slots__ = ("muls", "adds")

    def __init__(self):
        self.muls = 0
        self.adds = 0

    def add(self, mul=0, add=0):
        self.muls += mul
        self.adds += add

    @property
    def flops(self):
        """Real-flop equivalent of the recorded complex operations."""
        return MUL_FLOPS * self.muls + ADD_FLOPS * self.adds

    def snapshot(self):
        return self.flops

    def __repr__(self):
        return "FlopCounter(muls=%d, adds=%d, flops=%d)" % (
            self.muls, self.adds, self.flops)
