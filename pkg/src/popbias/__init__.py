"""
Feedback-loop simulation and group-level popularity-bias metrics for
collaborative-filtering recommenders.
"""

__version__ = "0.1.0"
