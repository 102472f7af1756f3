"""Interference statistics of networks whose senders form a Matérn type-II
hard-core process with Nakagami-m fading."""

__version__ = "0.1.0"
