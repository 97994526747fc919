"""cbfland - multi-UAV landing simulator with CBF safety filtering

UAVs land on static or moving UGVs while a quadratic-program safety filter
keeps landing-funnel and inter-UAV collision barriers nonnegative.
"""

__version__ = "1.0.0"
__author__ = "cbfland Team"
__description__ = "Multi-UAV landing simulator with CBF safety filtering"
