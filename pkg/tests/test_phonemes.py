import pytest

from dysarthric_tts.phonemes import (
    INVENTORY, PAD, PAUSE, PAUSE_ID, PHONE_TO_ID, PhonemeSequence, UnknownWordError, text_to_phonemes,
)


def test_inventory_reserves_pad_and_pause():
    assert PHONE_TO_ID[PAD] == 0
    assert PAUSE_ID == len(INVENTORY) - 1
    assert len(set(INVENTORY)) == len(INVENTORY)


def test_text_lookup_assigns_word_indices():
    seq = text_to_phonemes("bad and good")
    assert seq.n_words == 3
    assert seq.word_index[0] == 0 and seq.word_index[-1] == 2
    assert len(seq.inter_word_slots) == 2


def test_unknown_word_fails_unless_fallback():
    with pytest.raises(UnknownWordError):
        text_to_phonemes("zyzzyva")
    assert len(text_to_phonemes("zyzzyva", letter_fallback=True)) > 0


def test_pause_must_carry_previous_word_index():
    PhonemeSequence(["B", PAUSE, "D"], [0, 0, 1])
    with pytest.raises(ValueError, match="PAUSE"):
        PhonemeSequence(["B", PAUSE, "D"], [0, 1, 1])


@pytest.mark.parametrize("tokens,wi", [(["B"], [1]), (["B", "D"], [1, 0]), (["B"], [0, 0]), (["nope"], [0])])
def test_invalid_sequences_rejected(tokens, wi):
    with pytest.raises(ValueError):
        PhonemeSequence(tokens, wi)


def test_free_slots_exclude_pause_neighbours():
    seq = PhonemeSequence(["B", PAUSE, "D", "G"], [0, 0, 1, 2])
    assert seq.inter_word_slots == [1, 2]
    assert seq.free_slots == [2]
    assert seq.without_pauses().tokens == ["B", "D", "G"]
