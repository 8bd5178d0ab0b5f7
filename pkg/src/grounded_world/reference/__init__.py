"""Reference implementations kept apart from the production code paths.

Nothing here may import scoring helpers from grounded_world.relations;
only the shared data model is common ground. Tests cross-check the two.
"""

from .oracle import brute_force_oracle

__all__ = ["brute_force_oracle"]
