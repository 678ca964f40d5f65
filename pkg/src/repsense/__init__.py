"""Exercise recognition from body-worn inertial sensors.

Pipeline: align multi-rate sensor files into a session, segment it into
repetition frames by autocorrelation, extract per-frame statistics and classify
them with Gaussian naive Bayes.  ``synthgen`` supplies labeled workouts with
known repetition boundaries and ``evalkit`` the evaluation protocols.
"""

__version__ = "0.1.0"
