"""PCPG seq2seq - pseudo-convolutional policy gradient training for attention sequence models."""

__version__ = "0.1.0"
__author__ = "pcpg-seq2seq developers"
__description__ = "Pseudo-convolutional policy gradient for attention-based sequence-to-sequence models"
