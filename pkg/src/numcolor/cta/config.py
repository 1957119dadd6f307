"""Configuration for the color token aggregator."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict


@dataclass(frozen=True)
class CtaConfig:
    char_vocab: int = 512
    char_dim: int = 64
    kernel_sizes: tuple = (2, 3, 4)
    token_dim: int = 256
    max_chars: int = 32
    layers: int = 4
    heads: int = 4
    ffn_dim: int = 512
    max_seq: int = 256
    dropout: float = 0.1

    def __post_init__(self):
        if self.token_dim % self.heads != 0:
            raise ValueError("token_dim must be divisible by heads")
        if min(self.char_vocab, self.char_dim, self.token_dim,
               self.max_chars, self.layers, self.heads,
               self.ffn_dim, self.max_seq) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def channel_split(self):
        """Output channels per kernel; remainder goes to the smallest kernel."""
        ks = sorted(self.kernel_sizes)
        base, rem = divmod(self.token_dim, len(ks))
        return {k: base + (rem if k == ks[0] else 0) for k in ks}

    def to_dict(self):
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["kernel_sizes"] = tuple(d["kernel_sizes"])
        return cls(**d)


def toy_config(dropout=0.0, char_vocab=128):
    """Small preset for tests and CPU-scale experiments.

    max_chars 8 keeps the char convolutions cheap; token surfaces longer
    than 8 characters (rare outside char-level color literals, which the
    char scheme splits anyway) are truncated. char_vocab 128 is the
    smallest hashed vocabulary where no two ASCII characters that matter
    for color literals (hex digits vs letters) share a bucket.
    """
    return CtaConfig(
        char_vocab=char_vocab, char_dim=8, token_dim=32, max_chars=8,
        layers=2, heads=2, ffn_dim=64, max_seq=256, dropout=dropout,
    )
