"""SOUNDEX-augmented language modeling toolkit for code-mixed text."""

from soundexlm.phonetics import soundex

__version__ = "0.1.0"

__all__ = ["soundex", "__version__"]
