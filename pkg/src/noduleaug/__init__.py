"""Local feature augmentation pipeline for nodule image classification.

Stages: patch inpainting (context encoder), nodule residual extraction,
classifier-gated nodule banking, per-epoch local insertion augmentation,
occlusion-style attention maps, and a synthetic phantom harness that makes
the whole pipeline verifiable at desk scale.
"""

__version__ = "0.1.0"
