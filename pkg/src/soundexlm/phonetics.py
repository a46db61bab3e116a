"""American SOUNDEX encoding of single words.

Maps a word to a four-character code (one letter, three digits) so that
similar-sounding spelling variants collapse onto the same code, e.g.
``acha``/``achha``/``acchha`` -> ``A200``. Codes are the phonetic side
channel fed to the SMLM/SAMLM input builders.
"""

from __future__ import annotations

import re

_DIGIT_OF = {}
for _letters, _digit in (
    ("bfpv", "1"),
    ("cgjkqsxz", "2"),
    ("dt", "3"),
    ("l", "4"),
    ("mn", "5"),
    ("r", "6"),
):
    for _c in _letters:
        _DIGIT_OF[_c] = _digit

_VOWELS = frozenset("aeiouy")
# h and w are transparent: they neither emit a digit nor break a run of
# equal digits.
_TRANSPARENT = frozenset("hw")

_NON_ALPHA = re.compile(r"[^a-zA-Z]+")


def soundex(word: str) -> str | None:
    """Return the 4-character SOUNDEX code of ``word``, or None.

    Non-alphabetic characters (digits, punctuation, non-Latin script) are
    skipped for coding purposes; if no Latin letter remains the word is not
    encodable and None is returned. Encoding is case-insensitive and pure.

    Rules: keep the first letter; map the rest to digit classes
    (bfpv=1, cgjkqsxz=2, dt=3, l=4, mn=5, r=6); vowels separate runs,
    h/w are transparent; adjacent equal digits collapse (the first letter
    takes part through its own digit class); pad/truncate to 3 digits.
    """
    letters = _NON_ALPHA.sub("", word).lower()
    if not letters:
        return None

    first = letters[0]
    digits: list[str] = []
    prev = _DIGIT_OF.get(first)
    for ch in letters[1:]:
        if ch in _TRANSPARENT:
            continue
        if ch in _VOWELS:
            prev = None
            continue
        digit = _DIGIT_OF[ch]
        if digit != prev:
            digits.append(digit)
            prev = digit
        if len(digits) == 3:
            break

    return first.upper() + "".join(digits).ljust(3, "0")
