"""Character n-gram TF-IDF -> rank-128 LSA log encoder"""
import struct
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from sklearn.decomposition import TruncatedSVD
from sklearn.feature_extraction.text import TfidfVectorizer

from src.exceptions import EncoderError
from src.logger import setup_logger
import config

logger = setup_logger(__name__)

MAGIC = b"NFENC\x00"
FORMAT_VERSION = 1
HEADER = struct.Struct("<6sHqII")  # magic, version, fit_seed, vocab_size, dim


def _analyzer():
    return TfidfVectorizer(
        analyzer="char_wb",
        ngram_range=config.NGRAM_RANGE,
        lowercase=True,
    ).build_analyzer()


class LogEncoder:
    """Frozen encoder: vocabulary, idf weights and the SVD projection"""

    def __init__(self, vocabulary: Sequence[str], idf: np.ndarray, projection: np.ndarray,
                 fit_seed: int, cache_size: int = config.ENCODER_CACHE_SIZE):
        """Initialize from fitted arrays

        Args:
            vocabulary: n-grams in column order
            idf: (vocab_size,) float32 inverse document frequencies
            projection: (vocab_size, dim) float32 LSA projection
            fit_seed: seed the projection was fitted with
            cache_size: maximum number of memoised encodings
        """
        if len(vocabulary) != idf.shape[0] or projection.shape[0] != idf.shape[0]:
            raise EncoderError("Vocabulary, idf and projection sizes disagree")
        self.vocabulary: List[str] = list(vocabulary)
        self.index: Dict[str, int] = {term: i for i, term in enumerate(self.vocabulary)}
        self.idf = np.asarray(idf, dtype=np.float32)
        self.projection = np.asarray(projection, dtype=np.float32)
        self.fit_seed = int(fit_seed)
        self.cache_size = cache_size
        self.oov_count = 0
        self._analyze = _analyzer()
        self._cache: Dict[str, np.ndarray] = {}
        self._idf64 = self.idf.astype(np.float64)
        self._proj64 = self.projection.astype(np.float64)

    @property
    def dimension(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def fit(cls, documents: Iterable[str], fit_seed: int = config.ENCODER_FIT_SEED,
            dimension: int = config.EMBEDDING_DIMENSION,
            vocabulary_cap: int = config.VOCABULARY_CAP) -> "LogEncoder":
        """Fit TF-IDF over char_wb n-grams and a rank-`dimension` truncated SVD

        The vocabulary keeps the top `vocabulary_cap` n-grams by document
        frequency (ties broken by n-gram order).

        Raises:
            EncoderError: fewer unique documents or n-grams than the rank
        """
        docs = list(documents)
        unique = len(set(docs))
        if unique < dimension:
            raise EncoderError(
                f"Corpus has {unique} unique documents; rank {dimension} needs at least "
                f"{dimension}. Generate a larger seed corpus."
            )

        full = TfidfVectorizer(analyzer="char_wb", ngram_range=config.NGRAM_RANGE, lowercase=True)
        counts = full.fit_transform(docs)
        terms = full.get_feature_names_out()
        if len(terms) > vocabulary_cap:
            df = np.asarray((counts > 0).sum(axis=0)).ravel()
            order = np.lexsort((np.arange(len(terms)), -df))[:vocabulary_cap]
            keep = sorted(terms[i] for i in order)
        else:
            keep = list(terms)
        if len(keep) <= dimension:
            raise EncoderError(
                f"Vocabulary of {len(keep)} n-grams cannot support rank {dimension}"
            )

        vectorizer = TfidfVectorizer(
            analyzer="char_wb", ngram_range=config.NGRAM_RANGE, lowercase=True, vocabulary=keep,
        )
        tfidf = vectorizer.fit_transform(docs)
        svd = TruncatedSVD(n_components=dimension, algorithm="randomized", random_state=fit_seed)
        svd.fit(tfidf)

        vocab = list(vectorizer.get_feature_names_out())
        encoder = cls(
            vocabulary=vocab,
            idf=vectorizer.idf_.astype(np.float32),
            projection=svd.components_.T.astype(np.float32),
            fit_seed=fit_seed,
        )
        logger.info(
            f"Fitted encoder on {len(docs)} documents: vocab={len(vocab)}, dim={dimension}, "
            f"explained variance={svd.explained_variance_ratio_.sum():.3f}"
        )
        return encoder

    def encode(self, text: str) -> np.ndarray:
        """n-gram counts x idf -> L2 -> projection -> L2

        A text whose every n-gram is out of vocabulary yields the zero vector.
        """
        cached = self._cache.get(text)
        if cached is not None:
            return cached

        counts = Counter(self._analyze(text))
        cols, vals = [], []
        for term, count in counts.items():
            col = self.index.get(term)
            if col is not None:
                cols.append(col)
                vals.append(count)

        if not cols:
            self.oov_count += 1
            logger.debug("Encoded record is entirely out of vocabulary")
            out = np.zeros(self.dimension, dtype=np.float64)
        else:
            cols = np.asarray(cols)
            weights = np.asarray(vals, dtype=np.float64) * self._idf64[cols]
            weights /= np.linalg.norm(weights)
            dense = weights @ self._proj64[cols]
            norm = np.linalg.norm(dense)
            if norm == 0.0:
                self.oov_count += 1
                out = np.zeros(self.dimension, dtype=np.float64)
            else:
                out = dense / norm

        if len(self._cache) < self.cache_size:
            self._cache[text] = out
        return out

    def encode_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        return np.vstack([self.encode(t) for t in texts])

    # ---- container ----

    def to_bytes(self) -> bytes:
        """Serialize: header, length-prefixed UTF-8 vocabulary, idf, projection (LE float32)"""
        parts = [HEADER.pack(MAGIC, FORMAT_VERSION, self.fit_seed,
                             len(self.vocabulary), self.dimension)]
        for term in self.vocabulary:
            raw = term.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
        parts.append(self.idf.astype("<f4").tobytes())
        parts.append(np.ascontiguousarray(self.projection.astype("<f4")).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LogEncoder":
        try:
            magic, version, fit_seed, vocab_size, dim = HEADER.unpack_from(blob, 0)
        except struct.error:
            raise EncoderError("Encoder file is truncated")
        if magic != MAGIC:
            raise EncoderError("Not an encoder file (bad magic)")
        if version != FORMAT_VERSION:
            raise EncoderError(f"Unsupported encoder format version {version}")

        offset = HEADER.size
        vocab = []
        try:
            for _ in range(vocab_size):
                (length,) = struct.unpack_from("<H", blob, offset)
                offset += 2
                vocab.append(blob[offset:offset + length].decode("utf-8"))
                offset += length
            idf = np.frombuffer(blob, dtype="<f4", count=vocab_size, offset=offset)
            offset += 4 * vocab_size
            proj = np.frombuffer(blob, dtype="<f4", count=vocab_size * dim, offset=offset)
        except (struct.error, ValueError, UnicodeDecodeError) as e:
            raise EncoderError(f"Corrupt encoder file: {str(e)}")
        return cls(vocab, idf.astype(np.float32), proj.reshape(vocab_size, dim).astype(np.float32),
                   fit_seed)

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved encoder to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LogEncoder":
        path = Path(path)
        if not path.exists():
            raise EncoderError(f"Encoder file not found: {path}")
        encoder = cls.from_bytes(path.read_bytes())
        logger.info(f"Loaded encoder from {path}: vocab={len(encoder.vocabulary)}")
        return encoder


def fit_encoder(corpus, fit_seed: int = config.ENCODER_FIT_SEED) -> LogEncoder:
    """Fit on LogRecords (or raw strings)"""
    texts = [getattr(item, "xml_text", item) for item in corpus]
    return LogEncoder.fit(texts, fit_seed=fit_seed)


def encode_log(model: LogEncoder, record) -> np.ndarray:
    return model.encode(getattr(record, "xml_text", record))


def load_or_fit_encoder(path: Optional[str] = None, scenario=None) -> LogEncoder:
    """Load the frozen encoder, fitting it from the seed corpus if the file is missing"""
    from src.scenarios import benchmark_scenario
    from src.telemetry import generate_seed_corpus

    path = path or config.ENCODER_MODEL_PATH
    if Path(path).exists():
        return LogEncoder.load(path)
    logger.info(f"No encoder at {path}; fitting from the seed corpus")
    rng = np.random.default_rng(config.ENCODER_FIT_SEED)
    corpus = generate_seed_corpus(scenario or benchmark_scenario(), rng, config.SEED_CORPUS_SIZE)
    encoder = fit_encoder(corpus, config.ENCODER_FIT_SEED)
    try:
        encoder.save(path)
    except OSError as e:
        logger.error(f"Could not cache encoder at {path}: {str(e)}")
    return encoder
