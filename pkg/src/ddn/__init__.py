"""Distilled dropout networks.

Train a dropout MLP, distill its Monte Carlo dropout ensemble into a single
deterministic student, and compare the calibration of baseline, ensemble and
student predictions.
"""

__version__ = "0.1.0"
