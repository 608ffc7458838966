"""Phoneme inventory, pronunciation lexicon and the word-indexed phoneme sequence."""

from __future__ import annotations

from dataclasses import dataclass, field

PAD = "<pad>"
PAUSE = "PAUSE"
SILENCE = "sp"  # alignment symbol for a silence segment

VOWELS = (
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY",
    "IH", "IY", "OW", "OY", "UH", "UW",
)
VOICED_CONSONANTS = (
    "B", "D", "DH", "G", "JH", "L", "M", "N", "NG", "R", "V", "W", "Y", "Z", "ZH",
)
UNVOICED_CONSONANTS = ("CH", "F", "HH", "K", "P", "S", "SH", "T", "TH")

# id 0 is padding; PAUSE is the last symbol
INVENTORY = (PAD,) + VOWELS + VOICED_CONSONANTS + UNVOICED_CONSONANTS + (PAUSE,)
PHONE_TO_ID = {p: i for i, p in enumerate(INVENTORY)}
PAUSE_ID = PHONE_TO_ID[PAUSE]


def is_voiced(phone):
    return phone in VOWELS or phone in VOICED_CONSONANTS


LEXICON = {
    "a": ["AH"],
    "and": ["AE", "N", "D"],
    "bad": ["B", "AE", "D"],
    "ball": ["B", "AO", "L"],
    "be": ["B", "IY"],
    "better": ["B", "EH", "T", "ER"],
    "big": ["B", "IH", "G"],
    "blue": ["B", "L", "UW"],
    "boat": ["B", "OW", "T"],
    "book": ["B", "UH", "K"],
    "bring": ["B", "R", "IH", "NG"],
    "can": ["K", "AE", "N"],
    "chair": ["CH", "EH", "R"],
    "come": ["K", "AH", "M"],
    "day": ["D", "EY"],
    "dog": ["D", "AO", "G"],
    "door": ["D", "AO", "R"],
    "dysarthric": ["D", "IH", "S", "AA", "R", "TH", "R", "IH", "K"],
    "eat": ["IY", "T"],
    "fish": ["F", "IH", "SH"],
    "five": ["F", "AY", "V"],
    "friend": ["F", "R", "EH", "N", "D"],
    "give": ["G", "IH", "V"],
    "go": ["G", "OW"],
    "good": ["G", "UH", "D"],
    "green": ["G", "R", "IY", "N"],
    "have": ["HH", "AE", "V"],
    "he": ["HH", "IY"],
    "home": ["HH", "OW", "M"],
    "house": ["HH", "AW", "S"],
    "how": ["HH", "AW"],
    "i": ["AY"],
    "is": ["IH", "Z"],
    "it": ["IH", "T"],
    "joy": ["JH", "OY"],
    "keep": ["K", "IY", "P"],
    "like": ["L", "AY", "K"],
    "little": ["L", "IH", "T", "AH", "L"],
    "look": ["L", "UH", "K"],
    "make": ["M", "EY", "K"],
    "me": ["M", "IY"],
    "moon": ["M", "UW", "N"],
    "my": ["M", "AY"],
    "no": ["N", "OW"],
    "now": ["N", "AW"],
    "old": ["OW", "L", "D"],
    "one": ["W", "AH", "N"],
    "open": ["OW", "P", "AH", "N"],
    "play": ["P", "L", "EY"],
    "please": ["P", "L", "IY", "Z"],
    "rain": ["R", "EY", "N"],
    "read": ["R", "IY", "D"],
    "red": ["R", "EH", "D"],
    "run": ["R", "AH", "N"],
    "say": ["S", "EY"],
    "see": ["S", "IY"],
    "she": ["SH", "IY"],
    "shoe": ["SH", "UW"],
    "sing": ["S", "IH", "NG"],
    "speech": ["S", "P", "IY", "CH"],
    "sun": ["S", "AH", "N"],
    "synthesize": ["S", "IH", "N", "TH", "AH", "S", "AY", "Z"],
    "take": ["T", "EY", "K"],
    "the": ["DH", "AH"],
    "thing": ["TH", "IH", "NG"],
    "this": ["DH", "IH", "S"],
    "three": ["TH", "R", "IY"],
    "to": ["T", "UW"],
    "today": ["T", "AH", "D", "EY"],
    "two": ["T", "UW"],
    "up": ["AH", "P"],
    "very": ["V", "EH", "R", "IY"],
    "voice": ["V", "OY", "S"],
    "volleyball": ["V", "AA", "L", "IY", "B", "AO", "L"],
    "walk": ["W", "AO", "K"],
    "want": ["W", "AA", "N", "T"],
    "water": ["W", "AO", "T", "ER"],
    "we": ["W", "IY"],
    "what": ["W", "AH", "T"],
    "where": ["W", "EH", "R"],
    "would": ["W", "UH", "D"],
    "yes": ["Y", "EH", "S"],
    "you": ["Y", "UW"],
    "zoo": ["Z", "UW"],
}

_LETTER_FALLBACK = {
    "a": "AE", "b": "B", "c": "K", "d": "D", "e": "EH", "f": "F", "g": "G",
    "h": "HH", "i": "IH", "j": "JH", "k": "K", "l": "L", "m": "M", "n": "N",
    "o": "AA", "p": "P", "q": "K", "r": "R", "s": "S", "t": "T", "u": "AH",
    "v": "V", "w": "W", "x": "K", "y": "Y", "z": "Z",
}


class UnknownWordError(KeyError):
    pass


@dataclass
class PhonemeSequence:
    """Phoneme tokens paired with the index of the word each token belongs to.

    A PAUSE token carries the word index of the token before it, so the
    word boundaries of the underlying text are unchanged by pauses.
    """

    tokens: list = field(default_factory=list)
    word_index: list = field(default_factory=list)

    def __post_init__(self):
        self.tokens = list(self.tokens)
        self.word_index = [int(w) for w in self.word_index]
        if len(self.tokens) != len(self.word_index):
            raise ValueError(
                f"tokens and word_index differ in length "
                f"({len(self.tokens)} != {len(self.word_index)})"
            )
        for tok in self.tokens:
            if tok not in PHONE_TO_ID or tok == PAD:
                raise ValueError(f"unknown phoneme symbol {tok!r}")
        if self.word_index:
            if self.word_index[0] != 0:
                raise ValueError("word_index must start at 0")
            for a, b in zip(self.word_index, self.word_index[1:]):
                if b < a:
                    raise ValueError("word_index must be non-decreasing")
            for i, tok in enumerate(self.tokens):
                if tok == PAUSE and i > 0 and self.word_index[i] != self.word_index[i - 1]:
                    raise ValueError(
                        f"PAUSE at position {i} must carry the preceding word index"
                    )

    def __len__(self):
        return len(self.tokens)

    @property
    def n_words(self):
        return self.word_index[-1] + 1 if self.word_index else 0

    @property
    def inter_word_slots(self):
        """Positions i with a word boundary between token i and token i + 1."""
        wi = self.word_index
        return [i for i in range(len(wi) - 1) if wi[i] != wi[i + 1]]

    @property
    def free_slots(self):
        """Inter-word slots with no PAUSE on either side."""
        return [
            i for i in self.inter_word_slots
            if self.tokens[i] != PAUSE and self.tokens[i + 1] != PAUSE
        ]

    @property
    def ids(self):
        return [PHONE_TO_ID[t] for t in self.tokens]

    def without_pauses(self):
        keep = [i for i, t in enumerate(self.tokens) if t != PAUSE]
        return PhonemeSequence([self.tokens[i] for i in keep], [self.word_index[i] for i in keep])


def words_of(text):
    return [w for w in "".join(c if c.isalpha() or c.isspace() else " " for c in text.lower()).split()]


def text_to_phonemes(text, lexicon=None, letter_fallback=False):
    """Look up every word of ``text``; unknown words raise unless ``letter_fallback``."""
    lexicon = LEXICON if lexicon is None else lexicon
    tokens, word_index = [], []
    for wi, word in enumerate(words_of(text)):
        if word in lexicon:
            phones = lexicon[word]
        elif letter_fallback:
            phones = [_LETTER_FALLBACK[c] for c in word if c in _LETTER_FALLBACK]
        else:
            raise UnknownWordError(f"word {word!r} is not in the lexicon")
        tokens.extend(phones)
        word_index.extend([wi] * len(phones))
    return PhonemeSequence(tokens, word_index)
