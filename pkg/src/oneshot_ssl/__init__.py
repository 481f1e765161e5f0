"""One-shot semi-supervised training engine: consistency training with
pseudo-label class balancing, prototype refining, self-training, and a
trajectory diagnosis advisor."""

__version__ = "0.1.0"
