"""Adaptive traffic light control for a sensed crossroad.

Layers: per-lane magnetometer sensing, per-crossroad aggregation, and a
fitness/counter driven phase selector over the crossroad's conflict
graph, plus a deterministic microsimulator that closes the loop.
"""

__version__ = "0.1.0"
