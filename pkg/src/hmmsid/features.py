"""LPC-cepstrum front end: pre-emphasis, framing, autocorrelation analysis,
prediction coefficients, cepstra, and optional per-utterance mean removal.

Pipeline (defaults in FrontendConfig): 16-bit audio normalized to [-1, 1),
first-difference pre-emphasis y[n] = x[n] - 0.95 x[n-1] (y[0] = x[0]),
30 ms symmetric Hamming windows every 10 ms, order-12 autocorrelation
prediction per frame, and the order-12 cepstrum of the prediction filter.
A frame whose autocorrelation cannot support prediction (digital silence)
yields a zero cepstrum and is flagged in the metadata.

Sign convention: prediction coefficients a_k satisfy
x_hat[n] = sum_k a_k x[n-k]; the prediction-error filter is
A(z) = 1 - sum_k a_k z^-k and the residual energy after order p is
r[0] * prod_i (1 - k_i^2) for reflection coefficients k_i.

File formats
------------
Binary feature cache (little-endian), extension ``.lpcf``:

    offset 0   magic   4 bytes  b"LPCF"
           4   version u16      1
           6   flags   u16      bit 0: cepstral mean subtraction applied
           8   T       u32      number of frames
          12   D       u32      coefficients per frame
          16   hash    u64      configuration digest (see config_digest)
          24   data    T*D float64, row-major

A plain-text twin (``write_features_text``) exists for debugging; floats are
written with shortest round-trip repr so text round-trips are exact too.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import wave
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateFrameError, SignalTooShortError

__all__ = [
    "FrontendConfig",
    "FeatureMeta",
    "FeatureMatrix",
    "pre_emphasize",
    "frame_and_window",
    "autocorrelation",
    "lpc_levinson_durbin",
    "lpc_to_cepstrum",
    "cepstral_mean_subtraction",
    "extract_features",
    "load_wav",
    "load_raw",
    "load_audio",
    "write_features",
    "read_features",
    "write_features_text",
    "read_features_text",
]

CACHE_MAGIC = b"LPCF"
CACHE_VERSION = 1
_FLAG_CMS = 1


@dataclass(frozen=True)
class FrontendConfig:
    """Analysis parameters. ``cms`` switches per-utterance cepstral mean
    subtraction on; everything else is the classical telephone-band setup."""

    sample_rate: int = 8000
    preemphasis: float = 0.95
    window_ms: float = 30.0
    hop_ms: float = 10.0
    lpc_order: int = 12
    cepstrum_order: int = 12
    cms: bool = False

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must be in [0, 1)")
        if self.window_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        if self.lpc_order < 1:
            raise ValueError("lpc_order must be >= 1")
        if not 1 <= self.cepstrum_order <= self.lpc_order:
            raise ValueError("cepstrum_order must be in [1, lpc_order]")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "preemphasis": self.preemphasis,
            "window_ms": self.window_ms,
            "hop_ms": self.hop_ms,
            "lpc_order": self.lpc_order,
            "cepstrum_order": self.cepstrum_order,
            "cms": self.cms,
        }

    def digest(self) -> int:
        """Stable 64-bit digest of the configuration (embedded in caches)."""
        return config_digest(self.to_dict())


def config_digest(mapping: dict) -> int:
    """First 8 bytes of sha256 over canonical JSON, as an unsigned int."""
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


@dataclass(frozen=True)
class FeatureMeta:
    source: str = ""
    cms_applied: bool = False
    config_hash: int = 0
    degenerate_frames: tuple = ()
    config: FrontendConfig | None = field(default=None, compare=False)


@dataclass(frozen=True)
class FeatureMatrix:
    """A (T, D) float64 matrix of per-frame coefficients plus provenance."""

    frames: np.ndarray
    meta: FeatureMeta = FeatureMeta()

    def __post_init__(self):
        x = np.asarray(self.frames, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"frames must be (T, D), got shape {x.shape}")
        object.__setattr__(self, "frames", x)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_dims(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------------------
# signal operations
# ---------------------------------------------------------------------------

def pre_emphasize(signal, coeff: float = 0.95) -> np.ndarray:
    """First-difference high-pass: y[n] = x[n] - coeff * x[n-1], y[0] = x[0]."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signal must be 1-dimensional")
    if x.size == 0:
        return x.copy()
    return np.append(x[0], x[1:] - coeff * x[:-1])


def frame_and_window(signal, window: int, hop: int) -> np.ndarray:
    """Slice into overlapping frames and apply a symmetric Hamming window.

    Yields floor((len - window) / hop) + 1 frames; trailing samples that do
    not fill a window are dropped. Raises SignalTooShortError when not even
    one window fits.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signal must be 1-dimensional")
    if window < 2 or hop < 1:
        raise ValueError("window must be >= 2 and hop >= 1")
    if x.size < window:
        raise SignalTooShortError(x.size, window)
    n_frames = (x.size - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx] * np.hamming(window)[None, :]


def autocorrelation(frame, max_lag: int) -> np.ndarray:
    """Biased autocorrelation r[k] = sum_n x[n] x[n+k] for k = 0..max_lag."""
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("frame must be 1-dimensional")
    if not 0 <= max_lag < x.size:
        raise ValueError(f"max_lag must be in [0, {x.size - 1}]")
    return np.array([x[: x.size - k] @ x[k:] for k in range(max_lag + 1)])


def lpc_levinson_durbin(r, order: int):
    """Solve the autocorrelation normal equations by Levinson-Durbin.

    Returns (a, err, k): prediction coefficients a[0..order-1] (a[i] is the
    weight of x[n-1-i]), the residual energy err = r[0] * prod(1 - k_i^2),
    and the reflection coefficients. Raises DegenerateFrameError when
    r[0] <= 0 or the recursion loses positive definiteness.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.size < order + 1:
        raise ValueError(f"need r[0..{order}], got shape {r.shape}")
    if r[0] <= 0.0:
        raise DegenerateFrameError(f"r[0] = {r[0]:.6g} is not positive")
    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] - a[: i - 1] @ r[1:i][::-1]
        ki = acc / err
        k[i - 1] = ki
        a_prev = a[: i - 1].copy()
        a[i - 1] = ki
        if i > 1:
            a[: i - 1] = a_prev - ki * a_prev[::-1]
        err = (1.0 - ki * ki) * err
        if err <= 0.0:
            raise DegenerateFrameError(
                f"prediction error vanished at order {i} (|k| >= 1)"
            )
    return a, float(err), k


def lpc_to_cepstrum(a, n_coeffs: int) -> np.ndarray:
    """Cepstrum of the synthesis filter 1/A(z) from prediction coefficients.

    c[0] = a[0]; c[n-1] = a[n-1] + sum_{k=1}^{n-1} (k/n) c[k-1] a[n-1-k]
    (1-based: c_n = a_n + sum (k/n) c_k a_{n-k}). Only n_coeffs <= order
    is supported.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("prediction coefficients must be 1-dimensional")
    if not 1 <= n_coeffs <= a.size:
        raise ValueError(f"n_coeffs must be in [1, {a.size}]")
    c = np.zeros(n_coeffs)
    c[0] = a[0]
    for n in range(2, n_coeffs + 1):
        ks = np.arange(1, n)
        c[n - 1] = a[n - 1] + np.sum(ks / n * c[: n - 1] * a[n - 1 - ks])
    return c


def cepstral_mean_subtraction(features: FeatureMatrix) -> FeatureMatrix:
    """Subtract the utterance's own per-coefficient mean. Returns a new
    FeatureMatrix with the cms_applied flag set."""
    mean = features.frames.mean(axis=0)
    return FeatureMatrix(
        features.frames - mean[None, :],
        replace(features.meta, cms_applied=True),
    )


def extract_features(signal, config: FrontendConfig = FrontendConfig(), source: str = "") -> FeatureMatrix:
    """Run the full front end on a [-1, 1) float signal.

    Degenerate frames (zero autocorrelation energy, or a frame on which the
    recursion collapses) produce all-zero coefficient rows and their indices
    are recorded in meta.degenerate_frames. A signal where every frame is
    degenerate raises DegenerateFrameError; a signal shorter than one window
    raises SignalTooShortError.
    """
    y = pre_emphasize(signal, config.preemphasis)
    frames = frame_and_window(y, config.window_samples, config.hop_samples)
    out = np.zeros((frames.shape[0], config.cepstrum_order))
    bad = []
    for t in range(frames.shape[0]):
        r = autocorrelation(frames[t], config.lpc_order)
        try:
            a, _, _ = lpc_levinson_durbin(r, config.lpc_order)
        except DegenerateFrameError:
            bad.append(t)
            continue
        out[t] = lpc_to_cepstrum(a, config.cepstrum_order)
    if len(bad) == frames.shape[0]:
        raise DegenerateFrameError("every frame of the signal is degenerate")
    fm = FeatureMatrix(
        out,
        FeatureMeta(
            source=source,
            cms_applied=False,
            config_hash=config.digest(),
            degenerate_frames=tuple(bad),
            config=config,
        ),
    )
    if config.cms:
        fm = cepstral_mean_subtraction(fm)
    return fm


# ---------------------------------------------------------------------------
# audio ingestion
# ---------------------------------------------------------------------------

def load_wav(path) -> tuple[int, np.ndarray]:
    """Read 16-bit PCM mono WAV. Returns (rate, float64 samples in [-1, 1)).

    Malformed containers raise ValueError so callers see one error type for
    every kind of unusable input file.
    """
    try:
        return _read_wav(path)
    except wave.Error as exc:
        raise ValueError(f"{path}: not a readable WAV file ({exc})") from exc
    except EOFError as exc:
        raise ValueError(f"{path}: truncated WAV file") from exc


def _read_wav(path) -> tuple[int, np.ndarray]:
    with wave.open(os.fspath(path), "rb") as fh:
        if fh.getcomptype() != "NONE":
            raise ValueError(f"{path}: compressed WAV is not supported")
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise ValueError(
                f"{path}: expected 16-bit samples, got {8 * fh.getsampwidth()}-bit"
            )
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return rate, samples


def load_raw(path, sample_rate: int) -> tuple[int, np.ndarray]:
    """Read headerless 16-bit little-endian PCM at a configured rate."""
    data = np.fromfile(os.fspath(path), dtype="<i2")
    return int(sample_rate), data.astype(np.float64) / 32768.0


def load_audio(path, config: FrontendConfig) -> np.ndarray:
    """Dispatch on extension (.wav vs raw) and enforce the configured rate.

    A WAV whose header rate differs from config.sample_rate is rejected:
    the configuration is the hashed source of truth for every downstream
    artifact, so a silent rate mismatch would poison reproducibility.
    """
    p = os.fspath(path)
    if p.lower().endswith(".wav"):
        rate, samples = load_wav(p)
        if rate != config.sample_rate:
            raise ValueError(
                f"{p}: file rate {rate} != configured rate {config.sample_rate} "
                "(resample the file or change sample_rate)"
            )
        return samples
    _, samples = load_raw(p, config.sample_rate)
    return samples


# ---------------------------------------------------------------------------
# feature caches
# ---------------------------------------------------------------------------

def _atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_features(features: FeatureMatrix, path) -> None:
    """Write the binary cache format documented in the module docstring."""
    x = np.ascontiguousarray(features.frames, dtype="<f8")
    flags = _FLAG_CMS if features.meta.cms_applied else 0
    header = struct.pack(
        "<4sHHIIQ",
        CACHE_MAGIC,
        CACHE_VERSION,
        flags,
        x.shape[0],
        x.shape[1],
        features.meta.config_hash & 0xFFFFFFFFFFFFFFFF,
    )
    _atomic_write_bytes(path, header + x.tobytes())


def read_features(path) -> FeatureMatrix:
    """Read a binary cache. meta.source is the file stem."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != CACHE_MAGIC:
        raise ValueError(f"{path}: not a feature cache")
    magic, version, flags, t, d, config_hash = struct.unpack("<4sHHIIQ", blob[:24])
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    need = 24 + 8 * t * d
    if len(blob) != need:
        raise ValueError(f"{path}: truncated cache ({len(blob)} bytes, need {need})")
    x = np.frombuffer(blob, dtype="<f8", offset=24).reshape(t, d).copy()
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return FeatureMatrix(
        x,
        FeatureMeta(
            source=stem,
            cms_applied=bool(flags & _FLAG_CMS),
            config_hash=config_hash,
        ),
    )


def write_features_text(features: FeatureMatrix, path) -> None:
    """Plain-text twin of the binary cache, for eyeballing and diffing."""
    lines = [
        "# lpcf-text 1",
        f"frames {features.n_frames}",
        f"dims {features.n_dims}",
        f"cms_applied {int(features.meta.cms_applied)}",
        f"config_hash {features.meta.config_hash}",
        f"degenerate {' '.join(str(i) for i in features.meta.degenerate_frames)}".rstrip(),
    ]
    for row in features.frames:
        lines.append(" ".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    dirname = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, os.fspath(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_features_text(path) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# lpcf-text"):
        raise ValueError(f"{path}: not a text feature cache")
    header = {}
    body_at = 1
    for i, line in enumerate(lines[1:], start=1):
        key = line.split(" ", 1)[0]
        if key in ("frames", "dims", "cms_applied", "config_hash", "degenerate"):
            parts = line.split(" ", 1)
            header[key] = parts[1] if len(parts) > 1 else ""
            body_at = i + 1
        else:
            break
    t = int(header["frames"])
    d = int(header["dims"])
    rows = [
        [float(v) for v in line.split()] for line in lines[body_at:body_at + t]
    ]
    x = np.array(rows, dtype=np.float64).reshape(t, d)
    degen = tuple(int(v) for v in header.get("degenerate", "").split())
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return FeatureMatrix(
        x,
        FeatureMeta(
            source=stem,
            cms_applied=bool(int(header.get("cms_applied", "0"))),
            config_hash=int(header.get("config_hash", "0")),
            degenerate_frames=degen,
        ),
    )
