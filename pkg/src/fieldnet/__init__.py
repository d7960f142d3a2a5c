"""fieldnet: polynomial ReLU replacements and exact prime-field inference.

Modules:
    approx   minimax approximation and integer-approximability checkers
    field    prime-field arithmetic with centered-lift semantics
    nn       real-domain training engine
    fieldnn  quantization and exact integer / F_p inference
    data     CIFAR loaders and synthetic datasets
    cli      the fieldnet command-line harness
"""

__version__ = "0.1.0"

from . import approx, cli, data, field, fieldnn, nn  # noqa: F401
