"""Fusion and orthogonal projection (FOP) workbench for face-voice association.

Works on precomputed face/voice embeddings: gated fusion head, joint
CE + orthogonality objective, hand-written backprop and Adam, baseline
metric-learning losses, and verification / matching / runtime evaluation.
"""

__version__ = "0.1.0"
