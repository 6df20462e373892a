"""Formality-sensitive MT support toolkit.

Submodules:
  textcore      shared types, 13a tokenization, corpus I/O
  rules         rule-based grammatical-formality labeling (de/es/it/ru)
  classifier    character n-gram formality classifier + silver labeling
  curation      streaming synthetic-supervision pipeline
  metrics       formality accuracy, TER-noshift, corpus BLEU
  intervention  toy encoder-decoder with additive style vectors
  cli           the `fsmt` command-line tool
"""

__version__ = "0.1.0"

from .textcore import (  # noqa: F401
    AnnotatedReference,
    CorpusRecord,
    FormalityLabel,
    LabeledTriplet,
    PairedContrastiveExample,
    Segment,
    tokenize_13a,
    whitespace_tokenize,
)
