"""Zero-shot architecture search around the inverse-coefficient-of-variation gradient proxy."""

__version__ = "0.1.0"
