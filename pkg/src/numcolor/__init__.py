"""NumColor text-side pipeline: perceptual color codebook, tokenizer-agnostic
numeric-color span tagging, embedding geometry training and analytics."""

__version__ = "0.1.0"
