"""Fingerspelling hand-pose classification from depth and intensity images.

The package covers the whole classification pipeline:

* ``imaging``   -- depth-driven preprocessing primitives (thresholding,
  renormalization, masking, centering, resizing, de-interlacing,
  histogram equalization).
* ``features``  -- layered binary depth features, intensity features and
  the raw / Gabor / bar baseline extractors.
* ``rbm``       -- binary restricted Boltzmann machines trained with
  one-step contrastive divergence.
* ``dbn``       -- stacked RBMs plus a 24-way softmax translation layer,
  with staged supervised training and model serialization.
* ``dataset``   -- manifest/PGM loading, the two train/valid/test split
  protocols, and a synthetic data generator for desk-scale runs.
* ``metrics``   -- confusion matrices, per-letter precision/recall and
  run comparison tables.
* ``cli``       -- the ``fingerspell`` command (gen-synthetic, extract,
  train, eval, predict).
"""

from fingerspell.alphabet import STATIC_LETTERS

__all__ = ["STATIC_LETTERS"]
__version__ = "0.1.0"
