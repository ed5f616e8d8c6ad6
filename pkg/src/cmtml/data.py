"""Data handling: feature files, annotations, word embeddings, synthetic data.

File formats
------------
Video features (one file per video, extension ``.fv``): little-endian binary.
Header is the 8-byte magic ``CMTMLFV1`` followed by ``uint32 d_raw``,
``uint32 T_clips`` and ``float64 duration_seconds``; the body holds
``d_raw * T_clips`` float32 values in clip-major (column-major) order.

Annotations: a JSON array of ``{video_id, query, t_start, t_end, duration}``
objects, times in seconds.

Word embeddings: UTF-8 text, one line per word, token followed by 300
space-separated decimals.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import AnnotationError, ConfigurationError, DataFormatError, InputError
from .validation import check_feature_array

FEATURE_MAGIC = b"CMTMLFV1"
_FEATURE_HEADER = struct.Struct("<8sIId")
FEATURE_SUFFIX = ".fv"
EMBEDDING_DIM = 300


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase whitespace tokenization; no punctuation handling by design."""
    return tuple(text.lower().split())


# ---------------------------------------------------------------------------
# Domain records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawVideoFeatures:
    """Per-clip features as extracted, before length unification."""

    video_id: str
    features: np.ndarray  # (d_raw, T_clips)
    duration_seconds: float

    def __post_init__(self):
        check_feature_array(self.features, name=f"features[{self.video_id}]")
        if not self.duration_seconds > 0:
            raise AnnotationError(f"{self.video_id}: duration must be positive, got {self.duration_seconds}")


@dataclass(frozen=True)
class MomentAnnotation:
    """A ground-truth moment with both second-level and clip-level boundaries."""

    video_id: str
    query_text: str
    t_start: float
    t_end: float
    duration: float
    start_idx: int
    end_idx: int

    def __post_init__(self):
        if self.duration <= 0:
            raise AnnotationError(f"{self.video_id}: duration must be positive, got {self.duration}")
        if not (0 <= self.t_start <= self.t_end <= self.duration):
            raise AnnotationError(
                f"{self.video_id}: need 0 <= t_start <= t_end <= duration, "
                f"got ({self.t_start}, {self.t_end}, {self.duration})"
            )
        if not (0 <= self.start_idx <= self.end_idx):
            raise AnnotationError(f"{self.video_id}: clip span ({self.start_idx}, {self.end_idx}) out of order")

    @property
    def tokens(self) -> tuple[str, ...]:
        return tokenize(self.query_text)

    @classmethod
    def from_times(cls, video_id: str, query_text: str, t_start: float, t_end: float,
                   duration: float, l: int) -> "MomentAnnotation":
        start_idx, end_idx = project_annotation(t_start, t_end, duration, l)
        return cls(video_id, query_text, float(t_start), float(t_end), float(duration), start_idx, end_idx)


@dataclass
class EmbeddingTable:
    """Frozen word vectors; lookups never receive gradient updates."""

    vocabulary: dict[str, int]
    vectors: np.ndarray  # (V, dim) float32

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise DataFormatError("embedding vectors must be a 2-D array")
        if self.vocabulary and max(self.vocabulary.values()) >= self.vectors.shape[0]:
            raise DataFormatError("vocabulary index exceeds vector table size")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def lookup(self, tokens) -> np.ndarray:
        """Return a (dim, N) matrix; out-of-vocabulary tokens map to the zero vector."""
        toks = tuple(tokens)
        if not toks:
            raise InputError("cannot embed an empty token sequence")
        out = np.zeros((self.dim, len(toks)), dtype=np.float32)
        for j, tok in enumerate(toks):
            row = self.vocabulary.get(tok)
            if row is not None:
                out[:, j] = self.vectors[row]
        return out


class LocalizationSample(NamedTuple):
    """One training/evaluation unit: clip features, query tokens, annotation."""

    features: np.ndarray  # (d, l)
    tokens: tuple[str, ...]
    annotation: MomentAnnotation


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic localizable dataset generator."""

    n_samples: int
    l: int = 64
    d: int = 16
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if self.l < 2:
            raise ConfigurationError("l must be >= 2")
        if self.d < 1:
            raise ConfigurationError("d must be >= 1")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")


# ---------------------------------------------------------------------------
# Temporal grid operations
# ---------------------------------------------------------------------------


def interpolate_to_fixed_length(raw: RawVideoFeatures, l: int) -> np.ndarray:
    """Resample (d, T) clip features to exactly l columns by linear interpolation.

    Column j is the linear interpolation of the input at fractional position
    j * (T - 1) / (l - 1), so the output spans the full input range. Constant
    inputs are reproduced exactly and T == l is the identity.
    """
    if l < 2:
        raise ConfigurationError(f"target clip count must be >= 2, got {l}")
    feats = check_feature_array(raw.features, name=f"features[{raw.video_id}]")
    d, t_clips = feats.shape
    if t_clips == l:
        return feats.copy()
    if t_clips == 1:
        return np.repeat(feats, l, axis=1)
    positions = np.linspace(0.0, t_clips - 1.0, num=l)
    left = np.floor(positions).astype(np.intp)
    left = np.minimum(left, t_clips - 2)
    frac = positions - left
    out = feats[:, left] * (1.0 - frac) + feats[:, left + 1] * frac
    return out.astype(feats.dtype, copy=False)


def project_annotation(t_start: float, t_end: float, duration: float, l: int) -> tuple[int, int]:
    """Project a second interval onto the l-clip grid (inclusive end clip).

    The start clip is floor(t_start * l / duration); the end clip is the last
    clip the interval touches, i.e. ceil(t_end * l / duration) - 1, so an end
    time sitting exactly on a clip boundary belongs to the clip before it.
    Both indices are clamped into [0, l - 1] and ordered.
    """
    if duration <= 0:
        raise AnnotationError(f"duration must be positive, got {duration}")
    if not (0 <= t_start <= t_end <= duration):
        raise AnnotationError(f"need 0 <= t_start <= t_end <= duration, got ({t_start}, {t_end}, {duration})")
    start_idx = min(l - 1, int(math.floor(t_start * l / duration)))
    end_idx = min(l - 1, int(math.ceil(t_end * l / duration)) - 1)
    end_idx = max(end_idx, start_idx)
    return start_idx, end_idx


def clip_span_to_seconds(start_idx: int, end_idx: int, duration: float, l: int) -> tuple[float, float]:
    """Inverse of the grid projection: clip span [x, y] covers seconds [x, y+1) * duration / l."""
    return start_idx * duration / l, (end_idx + 1) * duration / l


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------


def write_feature_file(path, features: np.ndarray, duration_seconds: float) -> None:
    feats = check_feature_array(features)
    d_raw, t_clips = feats.shape
    body = np.ascontiguousarray(feats.T, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, d_raw, t_clips, float(duration_seconds)))
        fh.write(body)


def load_feature_file(path) -> RawVideoFeatures:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes, need {_FEATURE_HEADER.size})")
    magic, d_raw, t_clips, duration = _FEATURE_HEADER.unpack_from(raw, 0)
    if magic != FEATURE_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r} at byte 0")
    if d_raw == 0 or t_clips == 0:
        raise DataFormatError(f"{path}: empty feature array (d_raw={d_raw}, T_clips={t_clips})")
    expected = d_raw * t_clips * 4
    body = raw[_FEATURE_HEADER.size:]
    if len(body) != expected:
        raise DataFormatError(
            f"{path}: body has {len(body)} bytes at byte {_FEATURE_HEADER.size}, expected {expected}"
        )
    flat = np.frombuffer(body, dtype="<f4")
    features = flat.reshape(t_clips, d_raw).T.copy()
    if not np.isfinite(features).all():
        raise DataFormatError(f"{path}: non-finite feature values")
    if duration <= 0:
        raise DataFormatError(f"{path}: non-positive duration {duration}")
    return RawVideoFeatures(video_id=path.stem, features=features, duration_seconds=duration)


def feature_path(features_dir, video_id: str) -> Path:
    return Path(features_dir) / f"{video_id}{FEATURE_SUFFIX}"


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------

_ANNOTATION_KEYS = ("video_id", "query", "t_start", "t_end", "duration")


def load_annotations(path, l: int = 64) -> list[MomentAnnotation]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, list):
        raise DataFormatError(f"{path}: expected a JSON array of annotation objects")
    annotations = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise DataFormatError(f"{path}: entry {i} is not an object")
        missing = [key for key in _ANNOTATION_KEYS if key not in item]
        if missing:
            raise DataFormatError(f"{path}: entry {i} missing keys {missing}")
        try:
            annotations.append(
                MomentAnnotation.from_times(
                    video_id=str(item["video_id"]),
                    query_text=str(item["query"]),
                    t_start=float(item["t_start"]),
                    t_end=float(item["t_end"]),
                    duration=float(item["duration"]),
                    l=l,
                )
            )
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: entry {i}: {exc}") from exc
        except AnnotationError as exc:
            raise AnnotationError(f"{path}: entry {i}: {exc}") from exc
    return annotations


def write_annotations(path, annotations) -> None:
    records = [
        {
            "video_id": ann.video_id,
            "query": ann.query_text,
            "t_start": ann.t_start,
            "t_end": ann.t_end,
            "duration": ann.duration,
        }
        for ann in annotations
    ]
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Word embeddings
# ---------------------------------------------------------------------------


def load_embeddings(path, dim: int = EMBEDDING_DIM) -> EmbeddingTable:
    """Parse GloVe-style text embeddings; a duplicated word keeps its last vector."""
    path = Path(path)
    vocabulary: dict[str, int] = {}
    rows: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise DataFormatError(f"{path}: line {line_no}: expected {dim + 1} fields, got {len(parts)}")
            word = parts[0]
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {line_no}: {exc}") from exc
            if word in vocabulary:
                warnings.warn(f"{path}: line {line_no}: duplicate word {word!r}, last entry wins")
                rows[vocabulary[word]] = vec
            else:
                vocabulary[word] = len(rows)
                rows.append(vec)
    vectors = np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    return EmbeddingTable(vocabulary=vocabulary, vectors=vectors)


def write_embeddings(path, table: EmbeddingTable) -> None:
    ordered = sorted(table.vocabulary.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        for word, row in ordered:
            values = " ".join(repr(float(v)) for v in table.vectors[row])
            fh.write(f"{word} {values}\n")


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------

SYNTHETIC_VOCABULARY = (
    "person", "dog", "cat", "ball", "car", "door", "table", "kitchen",
    "runs", "jumps", "opens", "throws", "eats", "falls", "spins", "waves",
    "red", "blue", "slowly", "quickly", "after", "before", "near", "behind",
)


def _pattern_vectors(seed: int, d: int) -> np.ndarray:
    """Per-word signal directions; fixed by the dataset seed alone."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7061747465726E]))
    return rng.normal(0.0, 1.0, size=(len(SYNTHETIC_VOCABULARY), d))


def _token_pattern(tokens: tuple[str, ...], word_patterns: np.ndarray) -> np.ndarray:
    index = {w: i for i, w in enumerate(SYNTHETIC_VOCABULARY)}
    acc = np.mean([word_patterns[index[t]] for t in tokens], axis=0)
    norm = np.linalg.norm(acc)
    return acc / norm if norm > 0 else acc


def generate_synthetic_dataset(spec: SyntheticSpec) -> list[LocalizationSample]:
    """Draw localizable samples: a token-derived pattern planted on a random span.

    Clips inside the span carry the pattern vector (plus noise); clips outside
    carry independent zero-mean noise with std ``spec.noise_std``. Spans cover
    between 2 and l/2 clips so localization is informative. Everything is a
    pure function of ``spec.seed``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x73616D706C6573]))
    word_patterns = _pattern_vectors(spec.seed, spec.d)
    samples = []
    max_span = max(2, spec.l // 2)
    for i in range(spec.n_samples):
        n_tokens = int(rng.integers(3, 9))
        tokens = tuple(rng.choice(SYNTHETIC_VOCABULARY, size=n_tokens))
        span = int(rng.integers(2, max_span + 1))
        start = int(rng.integers(0, spec.l - span + 1))
        end = start + span - 1
        features = rng.normal(0.0, spec.noise_std, size=(spec.d, spec.l))
        features[:, start:end + 1] += _token_pattern(tokens, word_patterns)[:, None]
        duration = float(spec.l)
        annotation = MomentAnnotation(
            video_id=f"synth{i:05d}",
            query_text=" ".join(tokens),
            t_start=start * duration / spec.l,
            t_end=(end + 1) * duration / spec.l,
            duration=duration,
            start_idx=start,
            end_idx=end,
        )
        samples.append(LocalizationSample(features.astype(np.float32), tokens, annotation))
    return samples


def synthetic_embedding_table(spec: SyntheticSpec, dim: int = EMBEDDING_DIM) -> EmbeddingTable:
    """Random frozen embeddings for the synthetic vocabulary, fixed by the seed."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x656D626564]))
    vectors = rng.normal(0.0, 0.4, size=(len(SYNTHETIC_VOCABULARY), dim)).astype(np.float32)
    vocabulary = {w: i for i, w in enumerate(SYNTHETIC_VOCABULARY)}
    return EmbeddingTable(vocabulary=vocabulary, vectors=vectors)


def write_synthetic_dataset(spec: SyntheticSpec, out_dir) -> None:
    """Materialize a synthetic dataset as feature files + annotations + embeddings."""
    out = Path(out_dir)
    features_dir = out / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    samples = generate_synthetic_dataset(spec)
    for sample in samples:
        write_feature_file(
            feature_path(features_dir, sample.annotation.video_id),
            sample.features,
            sample.annotation.duration,
        )
    write_annotations(out / "annotations.json", [s.annotation for s in samples])
    write_embeddings(out / "embeddings.txt", synthetic_embedding_table(spec))


def load_samples(features_dir, annotations_path, l: int = 64) -> tuple[list[LocalizationSample], list[MomentAnnotation]]:
    """Pair annotations with their feature files; missing videos are skipped with a warning."""
    annotations = load_annotations(annotations_path, l=l)
    samples = []
    skipped = []
    cache: dict[str, np.ndarray] = {}
    for ann in annotations:
        if ann.video_id not in cache:
            fpath = feature_path(features_dir, ann.video_id)
            if not fpath.exists():
                skipped.append(ann)
                warnings.warn(f"missing feature file for video {ann.video_id!r}, skipping")
                continue
            raw = load_feature_file(fpath)
            cache[ann.video_id] = interpolate_to_fixed_length(raw, l)
        samples.append(LocalizationSample(cache[ann.video_id], ann.tokens, ann))
    return samples, skipped
