"""Porter (1980) suffix-stripping stemmer.

Two variants are provided. ``"reference"`` (the default) reproduces Martin
Porter's own distributed implementation, which is the one embedded in
common IR toolkits and which generated the published ``voc.txt`` /
``output.txt`` vocabulary. It departs from the 1980 description in three
places: words of length <= 2 are left alone, ``bli -> ble`` replaces
``abli -> able`` and ``logi -> log`` is added to step 2.
``"original"`` follows the 1980 rule tables literally.
"""

from __future__ import annotations

from functools import lru_cache

__all__ = ["PorterStemmer", "stem"]

_VOWELS = frozenset("aeiou")

_STEP2_REFERENCE = {
    "a": (("ational", "ate"), ("tional", "tion")),
    "c": (("enci", "ence"), ("anci", "ance")),
    "e": (("izer", "ize"),),
    "l": (("bli", "ble"), ("alli", "al"), ("entli", "ent"), ("eli", "e"), ("ousli", "ous")),
    "o": (("ization", "ize"), ("ation", "ate"), ("ator", "ate")),
    "s": (("alism", "al"), ("iveness", "ive"), ("fulness", "ful"), ("ousness", "ous")),
    "t": (("aliti", "al"), ("iviti", "ive"), ("biliti", "ble")),
    "g": (("logi", "log"),),
}

_STEP2_ORIGINAL = dict(_STEP2_REFERENCE)
_STEP2_ORIGINAL["l"] = (("abli", "able"),) + _STEP2_REFERENCE["l"][1:]
del _STEP2_ORIGINAL["g"]

_STEP3 = {
    "e": (("icate", "ic"), ("ative", ""), ("alize", "al")),
    "i": (("iciti", "ic"),),
    "l": (("ical", "ic"), ("ful", "")),
    "s": (("ness", ""),),
}

_STEP4 = {
    "a": ("al",),
    "c": ("ance", "ence"),
    "e": ("er",),
    "i": ("ic",),
    "l": ("able", "ible"),
    "n": ("ant", "ement", "ment", "ent"),
    "o": ("ion", "ou"),
    "s": ("ism",),
    "t": ("ate", "iti"),
    "u": ("ous",),
    "v": ("ive",),
    "z": ("ize",),
}


class PorterStemmer:
    """Stateless Porter stemmer; ``mode`` is ``"reference"`` or ``"original"``."""

    def __init__(self, mode: str = "reference"):
        if mode not in ("reference", "original"):
            raise ValueError(f"unknown Porter mode {mode!r}")
        self.mode = mode
        self._step2 = _STEP2_REFERENCE if mode == "reference" else _STEP2_ORIGINAL

    def stem(self, word: str) -> str:
        if self.mode == "reference" and len(word) <= 2:
            return word
        return _Stemming(word, self._step2).run()


class _Stemming:
    # Mirrors the classic buffer algorithm: self.b is the word, self.k the
    # index of its last character, self.j the end of the stem set by ends().

    def __init__(self, word: str, step2):
        self.b = list(word)
        self.k = len(word) - 1
        self.j = 0
        self.step2 = step2

    def run(self) -> str:
        if self.k < 0:
            return ""
        self.step1ab()
        if self.k > 0:
            self.step1c()
            self.step2_()
            self.step3()
            self.step4()
            self.step5()
        return "".join(self.b[: self.k + 1])

    def cons(self, i: int) -> bool:
        ch = self.b[i]
        if ch in _VOWELS:
            return False
        if ch == "y":
            return True if i == 0 else not self.cons(i - 1)
        return True

    def m(self) -> int:
        """Number of vowel-consonant sequences in b[0..j]."""
        n = 0
        i = 0
        j = self.j
        while True:
            if i > j:
                return n
            if not self.cons(i):
                break
            i += 1
        i += 1
        while True:
            while True:
                if i > j:
                    return n
                if self.cons(i):
                    break
                i += 1
            i += 1
            n += 1
            while True:
                if i > j:
                    return n
                if not self.cons(i):
                    break
                i += 1
            i += 1

    def vowel_in_stem(self) -> bool:
        return any(not self.cons(i) for i in range(self.j + 1))

    def doublec(self, j: int) -> bool:
        return j >= 1 and self.b[j] == self.b[j - 1] and self.cons(j)

    def cvc(self, i: int) -> bool:
        if i < 2 or not self.cons(i) or self.cons(i - 1) or not self.cons(i - 2):
            return False
        return self.b[i] not in "wxy"

    def ends(self, s: str) -> bool:
        n = len(s)
        if n > self.k + 1:
            return False
        if "".join(self.b[self.k - n + 1 : self.k + 1]) != s:
            return False
        self.j = self.k - n
        return True

    def setto(self, s: str) -> None:
        self.b[self.j + 1 :] = list(s)
        self.k = self.j + len(s)

    def r(self, s: str) -> None:
        if self.m() > 0:
            self.setto(s)

    def step1ab(self) -> None:
        b = self.b
        if b[self.k] == "s":
            if self.ends("sses"):
                self.k -= 2
            elif self.ends("ies"):
                self.setto("i")
            elif self.k == 0 or b[self.k - 1] != "s":
                self.k -= 1
        del b[self.k + 1 :]
        if self.ends("eed"):
            if self.m() > 0:
                self.k -= 1
        elif (self.ends("ed") or self.ends("ing")) and self.vowel_in_stem():
            self.k = self.j
            del b[self.k + 1 :]
            if self.ends("at"):
                self.setto("ate")
            elif self.ends("bl"):
                self.setto("ble")
            elif self.ends("iz"):
                self.setto("ize")
            elif self.doublec(self.k):
                if b[self.k] not in "lsz":
                    self.k -= 1
            elif self.m_at(self.k) == 1 and self.cvc(self.k):
                self.j = self.k
                self.setto("e")
        del b[self.k + 1 :]

    def m_at(self, j: int) -> int:
        self.j = j
        return self.m()

    def step1c(self) -> None:
        if self.ends("y") and self.vowel_in_stem():
            self.b[self.k] = "i"

    def step2_(self) -> None:
        if self.k < 1:
            return
        for suffix, repl in self.step2.get(self.b[self.k - 1], ()):
            if self.ends(suffix):
                self.r(repl)
                break
        del self.b[self.k + 1 :]

    def step3(self) -> None:
        for suffix, repl in _STEP3.get(self.b[self.k], ()):
            if self.ends(suffix):
                self.r(repl)
                break
        del self.b[self.k + 1 :]

    def step4(self) -> None:
        if self.k < 1:
            return
        for suffix in _STEP4.get(self.b[self.k - 1], ()):
            if self.ends(suffix):
                if suffix == "ion" and not (self.j >= 0 and self.b[self.j] in "st"):
                    continue
                break
        else:
            return
        if self.m() > 1:
            self.k = self.j
            del self.b[self.k + 1 :]

    def step5(self) -> None:
        self.j = self.k
        if self.b[self.k] == "e":
            a = self.m()
            if a > 1 or (a == 1 and not self.cvc(self.k - 1)):
                self.k -= 1
        if self.b[self.k] == "l" and self.doublec(self.k) and self.m() > 1:
            self.k -= 1
        del self.b[self.k + 1 :]


_DEFAULT = PorterStemmer()


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    """Stem one lowercase word with the reference variant."""
    return _DEFAULT.stem(word)
