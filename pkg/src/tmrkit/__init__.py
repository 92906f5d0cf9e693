"""Simulation and analysis toolkit for sleep cueing experiments.

Subpackages cover the data model (``core``, ``io``), the cue scheduler,
behavioral metrics, a synthetic cohort generator (``sim``), EEG
preprocessing, spectral and phase-amplitude coupling measures, decoding
with surrogate statistics, and the command-line pipeline.
"""
__version__ = "0.1.0"
