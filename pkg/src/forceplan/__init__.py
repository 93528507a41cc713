"""Planning engine for forceful manipulation tasks.

The package couples a discrete task planner with continuous samplers and
quasi-static stability checks so that every plan it returns both achieves
the goal and transmits the required wrench through a stable chain of
contacts, grasps, and arm joints.
"""

__version__ = "0.1.0"
