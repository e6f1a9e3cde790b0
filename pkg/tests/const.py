"""Constants for qrecords tests."""
import math

SQRT_HALF = 1 / math.sqrt(2)
SQRT_03 = math.sqrt(0.3)
SQRT_07 = math.sqrt(0.7)

EXACT = 1e-12
ROUND_TRIP = 1e-10
