"""Spatial grounding and relational-reasoning engine.

Lifts 2D detections into metric 3D anchors via depth raycasting, maintains a
typed scene graph fused from geometric predicates and semantic proposals, and
answers spatial queries through a coordinator that reuses the world model when
it is fresh enough.
"""

__version__ = "0.1.0"
