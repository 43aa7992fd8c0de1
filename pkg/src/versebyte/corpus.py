"""Verse-keyed corpus handling: loading, alignment, splits, statistics.

Corpus files are UTF-8 text with one verse per line in the form
``verse_id<TAB>text``. Verse ids are 8-digit strings ``BBCCCVVV``
(book, chapter, verse, zero-padded) so they sort the same as their
numeric components.
"""

import json
import random
from collections import Counter
from dataclasses import dataclass, field

from .validation import check_language_code


class CorpusError(ValueError):
    """Malformed corpus data: bad verse ids, duplicate ids, bad lines."""


@dataclass(frozen=True, order=True)
class VerseId:
    book: int
    chapter: int
    verse: int

    def __post_init__(self):
        for name, value, hi in (("book", self.book, 99),
                                ("chapter", self.chapter, 999),
                                ("verse", self.verse, 999)):
            if not 1 <= value <= hi:
                raise CorpusError(f"{name} must be in 1..{hi}, got {value}")

    def render(self) -> str:
        return f"{self.book:02d}{self.chapter:03d}{self.verse:03d}"

    def __str__(self):
        return self.render()


def parse_verse_id(s: str) -> VerseId:
    """Parse an 8-digit ``BBCCCVVV`` string into a VerseId."""
    if len(s) != 8:
        raise CorpusError(f"verse id must be exactly 8 digits, got {len(s)}: {s!r}")
    if not s.isascii() or not s.isdigit():
        raise CorpusError(f"verse id must contain only digits: {s!r}")
    book, chapter, verse = int(s[0:2]), int(s[2:5]), int(s[5:8])
    for name, value in (("book", book), ("chapter", chapter), ("verse", verse)):
        if value == 0:
            raise CorpusError(f"{name} must be >= 1 in verse id {s!r}")
    return VerseId(book, chapter, verse)


def render_verse_id(v: VerseId) -> str:
    return v.render()


@dataclass
class BibleVersion:
    language: str
    version_name: str
    verses: dict[VerseId, str] = field(default_factory=dict)

    def __post_init__(self):
        self.language = check_language_code(self.language)

    def __len__(self):
        return len(self.verses)


@dataclass(frozen=True)
class ParallelExample:
    verse_id: VerseId
    source_lang: str
    target_lang: str
    source_text: str
    target_text: str

    def __post_init__(self):
        if self.source_lang == self.target_lang:
            raise CorpusError(f"source and target language are both {self.source_lang!r}")
        if not self.source_text or not self.target_text:
            raise CorpusError(f"empty text in example for verse {self.verse_id}")

    def key(self):
        return (self.verse_id.render(), self.source_lang, self.target_lang)


@dataclass
class DatasetSplit:
    train: list[ParallelExample]
    validation: list[ParallelExample]
    test: list[ParallelExample]
    seed: int
    ratios: tuple[float, float, float]


def normalize_text(text: str) -> str:
    """Strip ends and collapse interior whitespace runs to single spaces."""
    return " ".join(text.split())


def load_version(path, language: str, version_name: str) -> BibleVersion:
    """Load a ``verse_id<TAB>text`` file into a BibleVersion.

    Blank lines and lines starting with ``#`` are skipped. Texts are
    whitespace-normalized. Duplicate verse ids and malformed lines are
    errors.
    """
    version = BibleVersion(language=language, version_name=version_name)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: not valid UTF-8: {exc}") from exc
    for lineno, line in enumerate(raw.split("\n"), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise CorpusError(f"{path}:{lineno}: expected 'verse_id<TAB>text'")
        id_part, text_part = line.split("\t", 1)
        try:
            verse_id = parse_verse_id(id_part.strip())
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        text = normalize_text(text_part)
        if not text:
            raise CorpusError(f"{path}:{lineno}: empty verse text")
        if verse_id in version.verses:
            raise CorpusError(f"{path}:{lineno}: duplicate verse id {verse_id.render()}")
        version.verses[verse_id] = text
    return version


def dump_version(version: BibleVersion, path) -> None:
    """Serialize a version back to the corpus file format (sorted by id)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for verse_id in sorted(version.verses):
            fh.write(f"{verse_id.render()}\t{version.verses[verse_id]}\n")


def align(src: BibleVersion, tgt: BibleVersion) -> list[ParallelExample]:
    """Pair up the verses both versions share, sorted by verse id."""
    if src.language == tgt.language:
        raise CorpusError(f"cannot align a language with itself: {src.language!r}")
    shared = sorted(src.verses.keys() & tgt.verses.keys())
    return [
        ParallelExample(
            verse_id=vid,
            source_lang=src.language,
            target_lang=tgt.language,
            source_text=src.verses[vid],
            target_text=tgt.verses[vid],
        )
        for vid in shared
    ]


def make_split(examples, ratios, seed: int) -> DatasetSplit:
    """Deterministically shuffle and partition examples into train/validation/test.

    Examples are first sorted by (verse_id, source_lang, target_lang) so the
    result does not depend on input order, then shuffled with a seeded PRNG.
    Sizes are floor-allocated from the ratios; the remainder goes to train.
    """
    examples = list(examples)
    if not examples:
        raise CorpusError("cannot split an empty example set")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise CorpusError(f"ratios must be three non-negative fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios must sum to 1, got {sum(ratios)}")

    ordered = sorted(examples, key=lambda ex: ex.key())
    rng = random.Random(seed)
    rng.shuffle(ordered)

    n = len(ordered)
    n_train = int(n * ratios[0] + 1e-9)
    n_val = int(n * ratios[1] + 1e-9)
    n_test = int(n * ratios[2] + 1e-9)
    n_train += n - (n_train + n_val + n_test)

    return DatasetSplit(
        train=ordered[:n_train],
        validation=ordered[n_train:n_train + n_val],
        test=ordered[n_train + n_val:],
        seed=seed,
        ratios=ratios,
    )


@dataclass
class CorpusStats:
    n_versions: int
    n_languages: int
    verse_counts: dict[str, int]
    byte_length_histogram: dict[int, int]


def corpus_stats(versions) -> CorpusStats:
    """Summarize a collection of BibleVersions."""
    versions = list(versions)
    counts = {}
    histogram = Counter()
    for v in versions:
        counts[f"{v.language}/{v.version_name}"] = len(v.verses)
        for text in v.verses.values():
            histogram[len(text.encode("utf-8"))] += 1
    return CorpusStats(
        n_versions=len(versions),
        n_languages=len({v.language for v in versions}),
        verse_counts=counts,
        byte_length_histogram=dict(histogram),
    )


def write_examples_jsonl(examples, path) -> None:
    """Write ParallelExamples as JSON Lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "verse_id": ex.verse_id.render(),
                "source_lang": ex.source_lang,
                "target_lang": ex.target_lang,
                "source_text": ex.source_text,
                "target_text": ex.target_text,
            }, ensure_ascii=False) + "\n")


def read_examples_jsonl(path) -> list[ParallelExample]:
    """Read ParallelExamples from a JSON Lines file."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                examples.append(ParallelExample(
                    verse_id=parse_verse_id(record["verse_id"]),
                    source_lang=record["source_lang"],
                    target_lang=record["target_lang"],
                    source_text=record["source_text"],
                    target_text=record["target_text"],
                ))
            except (KeyError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad example record: {exc}") from exc
    return examples
