"""Full-frequency temporal patching and SpecMask for spectrogram transformers."""

__version__ = "0.1.0"
