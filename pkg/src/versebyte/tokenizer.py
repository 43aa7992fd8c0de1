"""Lossless byte-level tokenization.

Vocabulary layout: pad=0, eos=1, unk=2, then the 256 byte values shifted
up by 3, giving a fixed vocabulary of 259 ids. Everything here is a pure
function over plain Python ints, safe for concurrent use.
"""

from .validation import check_language_code

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2
BYTE_OFFSET = 3
VOCAB_SIZE = 259


def encode(text: str, append_eos: bool = False) -> list[int]:
    """Map a UTF-8 string to token ids (one id per byte, +3 offset)."""
    ids = [b + BYTE_OFFSET for b in text.encode("utf-8")]
    if append_eos:
        ids.append(EOS_ID)
    return ids


def decode(ids) -> str:
    """Map token ids back to text.

    Special ids (pad/eos/unk) are dropped; remaining ids become bytes and
    are decoded as UTF-8 with invalid sequences replaced by U+FFFD.
    """
    raw = bytearray()
    for i in ids:
        if i >= VOCAB_SIZE or i < 0:
            raise ValueError(f"token id {i} outside vocabulary 0..{VOCAB_SIZE - 1}")
        if i >= BYTE_OFFSET:
            raw.append(i - BYTE_OFFSET)
    return raw.decode("utf-8", errors="replace")


def tag_source(source_text: str, target_lang: str) -> str:
    """Prefix a source text with its target-language tag ``>>xxx<< ``.

    The tag is plain text and gets tokenized as ordinary bytes, so the
    vocabulary stays closed.
    """
    check_language_code(target_lang)
    return f">>{target_lang}<< {source_text}"
