"""Simulation and analysis toolkit for quantum private queries.

Alice queries Bob's classical database through a coherent lookup (qRAM) and
checks Bob's answers to superposed queries to detect whether he tried to learn
which record she asked for.
"""

__version__ = "0.1.0"
