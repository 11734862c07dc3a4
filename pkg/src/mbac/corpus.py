"""Sentence corpus, vocabulary and fixed token embeddings."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_TOKENS = 15
MIN_TOKENS = 2


class CorpusError(RuntimeError):
    """Fatal configuration problem with a corpus or embedding file."""


def tokenize(line):
    """Lowercase, split on whitespace, strip edge punctuation, keep 15 tokens.

    >>> tokenize("Good morning, George.")
    ['good', 'morning', 'george']
    """
    out = []
    for piece in line.lower().split():
        start, end = 0, len(piece)
        while start < end and not piece[start].isalnum():
            start += 1
        while end > start and not piece[end - 1].isalnum():
            end -= 1
        if start < end:
            out.append(piece[start:end])
    return out[:MAX_TOKENS]


@dataclass(frozen=True)
class SentenceStore:
    train: tuple
    test: tuple
    vocab: dict = field(repr=False)

    @property
    def words(self):
        return self._words

    def __post_init__(self):
        object.__setattr__(self, "_words", tuple(sorted(self.vocab, key=self.vocab.get)))

    def split(self, name):
        if name not in ("train", "test"):
            raise ValueError(f"unknown split {name!r}")
        return self.train if name == "train" else self.test


def build_store(sentences, seed=0):
    """Deduplicate, shuffle and halve pre-tokenized sentences (odd one to train)."""
    seen = set()
    usable = []
    for s in sentences:
        s = tuple(s[:MAX_TOKENS])
        if len(s) >= MIN_TOKENS and s not in seen:
            seen.add(s)
            usable.append(s)
    if not usable:
        raise CorpusError("corpus has no usable sentences (need at least 2 tokens)")
    vocab = {}
    for s in usable:
        for tok in s:
            vocab.setdefault(tok, len(vocab))
    order = np.random.default_rng(seed).permutation(len(usable))
    shuffled = [usable[i] for i in order]
    n_train = (len(shuffled) + 1) // 2
    return SentenceStore(tuple(shuffled[:n_train]), tuple(shuffled[n_train:]), vocab)


def load_corpus(path, seed=0, max_sentences=None):
    """Read a one-sentence-per-line UTF-8 file into a :class:`SentenceStore`."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    sentences = []
    for line in text.splitlines():
        toks = tokenize(line)
        if len(toks) >= MIN_TOKENS:
            sentences.append(toks)
            if max_sentences is not None and len(sentences) >= max_sentences:
                break
    return build_store(sentences, seed)


def sample_sentence(store, split, rng):
    sents = store.split(split)
    if not sents:
        raise ValueError(f"split {split!r} is empty")
    return list(sents[rng.integers(len(sents))])


class EmbeddingTable:
    """Fixed token vectors.

    In ``hash`` mode each token's UTF-8 bytes (plus the table seed) seed a
    private generator that draws a vector uniform on [-1, 1].  ``file`` mode
    serves vectors read from a text file and falls back to hashing for
    unknown tokens.
    """

    def __init__(self, dim, seed=0, path=None, dtype=np.float64):
        self.dim, self.seed, self.dtype = dim, seed, np.dtype(dtype)
        self.mode = "file" if path else "hash"
        self._cache = {}
        self._file = {}
        if path:
            self._file = _read_vectors(path, dim)

    def __call__(self, token):
        vec = self._cache.get(token)
        if vec is None:
            if token in self._file:
                vec = self._file[token].astype(self.dtype)
            else:
                vec = self._hashed(token)
            vec.setflags(write=False)
            self._cache[token] = vec
        return vec

    def _hashed(self, token):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16, key=str(self.seed).encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        vec = rng.uniform(-1.0, 1.0, self.dim)
        if not np.any(vec):
            vec[0] = 1.0
        return vec.astype(self.dtype)

    def embed(self, token):
        return self(token)


def _read_vectors(path, dim):
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read embedding file {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != dim + 1:
            raise CorpusError(f"{path}:{n}: expected token and {dim} values, got {len(parts) - 1} values")
        out[parts[0]] = np.array([float(x) for x in parts[1:]])
    return out


# ---------------------------------------------------------------- synthetic text

_DET = ["the", "a", "my", "your", "his", "her", "our", "their", "this", "that", "every", "one"]
_ADJ = """old young small large quiet bright dark cold warm heavy quick slow
strange gentle tired happy angry careful empty broken green red blue silver
long short soft loud busy lonely proud kind cruel wise foolish hidden distant""".split()
_NOUN = """man woman child girl boy dog cat house door window road river city
village morning evening night letter book table chair car train ship garden
friend brother sister mother father teacher doctor king queen horse bird tree
story song voice hand face room kitchen street market forest mountain island
phone message coffee bread wall floor sky sea storm fire lamp key box bag""".split()
_NAME = "george anna james mary tom lucy peter sarah henry emma jack alice".split()
_VERB_T = """saw found took opened closed watched followed carried wrote read
heard liked kept brought left painted called asked helped met answered""".split()
_VERB_I = """smiled waited laughed slept arrived left stopped listened turned
walked ran cried sighed nodded paused""".split()
_ADV = "slowly quietly again suddenly softly finally carefully today yesterday there outside".split()
_PREP = "in on near behind under over across into from with beside".split()
_OPEN = [
    "i think", "i hope", "she said", "he said", "you know", "i remember", "they told me",
    "we believe", "i wonder if", "nobody knew why", "it seems",
]


def _noun_phrase(rng):
    parts = [_DET[rng.integers(len(_DET))]]
    if rng.random() < 0.45:
        parts.append(_ADJ[rng.integers(len(_ADJ))])
    parts.append(_NOUN[rng.integers(len(_NOUN))])
    return parts


def _subject(rng):
    if rng.random() < 0.3:
        return [_NAME[rng.integers(len(_NAME))]]
    if rng.random() < 0.3:
        return [["i", "you", "she", "he", "we", "they"][rng.integers(6)]]
    return _noun_phrase(rng)


def synthetic_sentence(rng):
    words = []
    if rng.random() < 0.25:
        words += _OPEN[rng.integers(len(_OPEN))].split()
        if words[-1] != "if" and rng.random() < 0.5:
            words.append("that")
    words += _subject(rng)
    if rng.random() < 0.6:
        words.append(_VERB_T[rng.integers(len(_VERB_T))])
        words += _noun_phrase(rng)
    else:
        words.append(_VERB_I[rng.integers(len(_VERB_I))])
    while rng.random() < 0.5 and len(words) < 14:
        if rng.random() < 0.6:
            words.append(_PREP[rng.integers(len(_PREP))])
            words += _noun_phrase(rng)
        else:
            words.append(_ADV[rng.integers(len(_ADV))])
    if rng.random() < 0.2:
        words += ["and"] + _subject(rng) + [_VERB_I[rng.integers(len(_VERB_I))]]
    text = " ".join(words)
    return text[0].upper() + text[1:] + "."


def write_synthetic_corpus(path, n_sentences=20000, seed=0):
    """Write ``n_sentences`` distinct grammar-generated sentences, one per line.

    A stand-in for a real book corpus when none is available: clean text
    carries function-word structure that uniform vocabulary noise lacks.
    """
    rng = np.random.default_rng(seed)
    seen, lines = set(), []
    tries = 0
    while len(lines) < n_sentences:
        tries += 1
        if tries > 50 * n_sentences:
            raise RuntimeError("grammar cannot produce enough distinct sentences")
        s = synthetic_sentence(rng)
        key = tuple(tokenize(s))
        if key in seen or len(key) < MIN_TOKENS:
            continue
        seen.add(key)
        lines.append(s)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)
