"""Camera-based blood pressure estimation: rPPG extraction, beat screening,
a CNN/transformer/MLP model family and the evaluation statistics around it."""

__version__ = "0.1.0"
