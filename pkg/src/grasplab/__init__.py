"""Desk-scale dexterous grasping RL stack.

Library layers: deformation kinematics (``deform``), observation assembly
(``observation``), shaped rewards (``rewards``), the simulation environment
(``env``), the recurrent asymmetric actor-critic PPO trainer (``policy``),
curriculum scheduling (``curriculum``), and the operator CLI (``cli``).
"""

__version__ = "0.1.0"
