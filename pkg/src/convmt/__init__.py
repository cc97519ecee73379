"""convmt: a small-scale neural machine translation pipeline kit.

Subword tokenization (BPE and unigram LM), a convolutional
encoder-decoder trained with Nesterov momentum, beam-search decoding,
backtranslation data augmentation, and BLEU/RIBES evaluation, all on a
from-scratch reverse-mode autodiff core.
"""

__version__ = "0.1.0"
