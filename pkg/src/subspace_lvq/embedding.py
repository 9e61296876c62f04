"""Word embeddings and text preprocessing.

Loads whitespace-format embedding files (one ``word c_1 ... c_D`` entry per
line), tokenizes raw case text, removes stop words, and assembles the
per-document word-vector matrix consumed by the subspace layer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionError, EmptyDocumentError, FormatError

log = logging.getLogger(__name__)

# Pure-digit tokens longer than this carry no embedding signal (years and
# application numbers are shorter or contain separators).
_MAX_DIGIT_RUN = 4


@dataclass(frozen=True)
class EmbeddingTable:
    """Immutable word -> vector map of fixed dimension.

    Safe to share across threads once loaded; vectors are float64 and all
    have length ``dim``.
    """

    dim: int
    entries: dict[str, np.ndarray]
    source_name: str = ""

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def vector(self, word: str) -> np.ndarray | None:
        return self.entries.get(word)


@dataclass
class PreprocessedDoc:
    """Token stream of one document after tokenization and stop-word removal.

    ``dropped_oov`` and ``coverage`` are filled in by :func:`embed`:
    coverage = embedded / (embedded + dropped_oov).
    """

    doc_id: str
    kept_tokens: list[str]
    dropped_stopwords: int = 0
    dropped_oov: int = 0
    coverage: float = 1.0


@dataclass
class WordMatrix:
    """D x n matrix whose column j is the embedding of ``tokens[j]``."""

    doc_id: str
    columns: np.ndarray
    tokens: list[str] = field(default_factory=list)

    @property
    def n_words(self) -> int:
        return self.columns.shape[1]


def load_embeddings(path, expected_dim: int | None = None) -> EmbeddingTable:
    """Load a text-format embedding file.

    Each line is a token followed by D space-separated decimal floats.
    Duplicate words keep the last occurrence (a warning with the duplicate
    count is logged).

    Raises
    ------
    FormatError
        On unreadable files, malformed floats, inconsistent dimensions, or
        an empty file.
    DimensionError
        If ``expected_dim`` is given and does not match the file.
    """
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dim = None
    duplicates = 0
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read embedding file: {exc}", path=path) from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            if len(parts) < 2:
                raise FormatError("expected a token and at least one float", path=path, line=lineno)
            word = parts[0]
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"malformed float: {exc}", path=path, line=lineno) from exc
            if not np.all(np.isfinite(vec)):
                raise FormatError("non-finite embedding component", path=path, line=lineno)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise FormatError(
                    f"inconsistent dimension: expected {dim}, got {vec.size}",
                    path=path, line=lineno,
                )
            if word in entries:
                duplicates += 1
            entries[word] = vec
    if dim is None:
        raise FormatError("empty embedding file", path=path)
    if duplicates:
        log.warning("%s: %d duplicate words, last occurrence kept", path, duplicates)
    if expected_dim is not None and dim != expected_dim:
        raise DimensionError(
            f"{path}: embedding dimension {dim} does not match expected {expected_dim}"
        )
    return EmbeddingTable(dim=dim, entries=entries, source_name=path.name)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write a table back to the text format, bit-exactly round-trippable."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for word, vec in table.entries.items():
            handle.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization.

    Leading/trailing characters that are not letters or digits are stripped,
    empty results are dropped, and pure-digit tokens longer than four
    characters are discarded.  Deterministic and idempotent.
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and not raw[start].isalnum():
            start += 1
        while end > start and not raw[end - 1].isalnum():
            end -= 1
        tok = raw[start:end]
        if not tok:
            continue
        if tok.isdigit() and len(tok) > _MAX_DIGIT_RUN:
            continue
        tokens.append(tok)
    return tokens


def default_stopwords_path() -> Path:
    """Path of the English stop-word list shipped with the package."""
    return Path(str(resources.files("subspace_lvq").joinpath("data/stopwords_en.txt")))


def load_stopwords(path=None) -> frozenset[str]:
    """Read a stop-word file: one lowercase word per line, ``#`` comments.

    Without a path, the packaged default English list is used.
    """
    path = Path(path) if path is not None else default_stopwords_path()
    words = set()
    try:
        handle = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read stop-word file: {exc}", path=path) from exc
    with handle:
        for line in handle:
            word = line.strip()
            if word and not word.startswith("#"):
                words.add(word.lower())
    return frozenset(words)


def remove_stopwords(tokens: list[str], stoplist) -> tuple[list[str], int]:
    """Filter tokens against a stop list, preserving order.

    Returns the kept tokens and the number dropped.
    """
    kept = [t for t in tokens if t not in stoplist]
    return kept, len(tokens) - len(kept)


def preprocess(doc_id: str, text: str, stoplist) -> PreprocessedDoc:
    """Tokenize and stop-filter one document."""
    tokens = tokenize(text)
    kept, dropped = remove_stopwords(tokens, stoplist)
    return PreprocessedDoc(doc_id=doc_id, kept_tokens=kept, dropped_stopwords=dropped)


def embed(doc: PreprocessedDoc, table: EmbeddingTable) -> WordMatrix:
    """Map a document's kept tokens to an embedding matrix.

    Out-of-vocabulary tokens are skipped entirely (no zero columns, which
    would distort the SVD basis); ``doc.dropped_oov`` and ``doc.coverage``
    are updated in place.

    Raises
    ------
    EmptyDocumentError
        If no token has an embedding.  Batch callers typically skip the
        document with a warning; single-document callers abort.
    """
    vectors = []
    tokens = []
    oov = 0
    for tok in doc.kept_tokens:
        vec = table.entries.get(tok)
        if vec is None:
            oov += 1
        else:
            vectors.append(vec)
            tokens.append(tok)
    doc.dropped_oov = oov
    if not vectors:
        doc.coverage = 0.0
        raise EmptyDocumentError(doc.doc_id)
    doc.coverage = len(tokens) / (len(tokens) + oov)
    columns = np.column_stack(vectors)
    return WordMatrix(doc_id=doc.doc_id, columns=columns, tokens=tokens)
