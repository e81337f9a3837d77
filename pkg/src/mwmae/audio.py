"""Audio decoding and log-mel spectrogram features.

The feature chain: 16 kHz mono PCM -> STFT (25 ms Hann window, 10 ms hop,
centered with reflect padding) -> power spectrum -> 80 triangular mel
filters (HTK scale, 50-8000 Hz) -> log(x + 1e-6). Spectrograms are laid
out frames x bins (T x F) and standardized per instance.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, ContractError

SAMPLE_RATE = 16000
WIN_LENGTH = 400     # 25 ms at 16 kHz
HOP_LENGTH = 160     # 10 ms
N_MELS = 80
FMIN = 50.0
FMAX = 8000.0
LOG_FLOOR = 1e-6


@dataclass
class AudioClip:
    """Mono PCM samples in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"sample_rate: expected {SAMPLE_RATE}, got {self.sample_rate}"
            )
        if self.samples.ndim != 1 or len(self.samples) < 1:
            raise AudioFormatError("samples: expected a non-empty 1-D array")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_wav(path: str | Path) -> AudioClip:
    """Read a RIFF/WAVE file; must be PCM16, mono, 16 kHz."""
    with wave.open(str(path), "rb") as wf:
        if wf.getcomptype() != "NONE":
            raise AudioFormatError(f"compression: expected PCM, got {wf.getcomptype()!r}")
        if wf.getsampwidth() != 2:
            raise AudioFormatError(f"sample_width: expected 2 bytes, got {wf.getsampwidth()}")
        if wf.getnchannels() != 1:
            raise AudioFormatError(f"channels: expected mono, got {wf.getnchannels()}")
        if wf.getframerate() != SAMPLE_RATE:
            raise AudioFormatError(
                f"sample_rate: expected {SAMPLE_RATE}, got {wf.getframerate()}"
            )
        raw = wf.readframes(wf.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioClip(pcm.astype(np.float64) / 32768.0)


def save_wav(path: str | Path, clip: AudioClip) -> None:
    """Write PCM16 mono 16 kHz; values are rounded to the nearest step."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = WIN_LENGTH,
    fmin: float = FMIN,
    fmax: float = FMAX,
) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, n_fft//2 + 1)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fft_hz = np.arange(n_fft // 2 + 1) * (SAMPLE_RATE / n_fft)
    fb = np.zeros((n_mels, len(fft_hz)))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        rising = (fft_hz - lo) / (center - lo)
        falling = (hi - fft_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_centers(n_mels: int = N_MELS, fmin: float = FMIN, fmax: float = FMAX) -> np.ndarray:
    """Center frequencies (Hz) of the triangular filters."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return edges_hz[1:-1]


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect-pad both ends; unlike np.pad this allows pad >= len(x)."""
    n = len(x)
    if n == 1:
        return np.full(n + 2 * pad, x[0])
    idx = np.arange(-pad, n + pad)
    period = 2 * (n - 1)
    idx = np.abs(np.mod(idx, period))
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def logmel(clip: AudioClip) -> np.ndarray:
    """Log-mel spectrogram, shape (floor(len/hop)+1, 80)."""
    x = clip.samples
    if len(x) < HOP_LENGTH:
        raise ContractError(
            f"clip too short: {len(x)} samples, need at least one hop ({HOP_LENGTH})"
        )
    pad = WIN_LENGTH // 2
    padded = _reflect_pad(x, pad)
    n_frames = len(x) // HOP_LENGTH + 1
    window = _hann_periodic(WIN_LENGTH)
    starts = np.arange(n_frames) * HOP_LENGTH
    frames = padded[starts[:, None] + np.arange(WIN_LENGTH)] * window
    spectrum = np.fft.rfft(frames, axis=1)
    power = np.abs(spectrum) ** 2
    mel = power @ mel_filterbank().T
    return np.log(mel + LOG_FLOOR)


def standardize(spec: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance over the whole instance; std floored at 1e-8."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.size < 2:
        raise ContractError("standardize: need at least 2 values")
    std = spec.std()
    return (spec - spec.mean()) / max(std, 1e-8)


def crop_or_pad(spec: np.ndarray, target_t: int, seed: int) -> np.ndarray:
    """Fix the frame count: seeded uniform-random crop or trailing zero-pad."""
    if target_t < 1:
        raise ContractError(f"target_t must be >= 1, got {target_t}")
    t = spec.shape[0]
    if t > target_t:
        start = int(np.random.default_rng(seed).integers(0, t - target_t + 1))
        return spec[start:start + target_t].copy()
    if t < target_t:
        out = np.zeros((target_t, spec.shape[1]))
        out[:t] = spec
        return out
    return spec.copy()


def cache_spectrograms(wav_dir: str | Path, out_path: str | Path) -> int:
    """Standardized log-mel spectrograms for a WAV tree, keyed by relative path."""
    from .container import save_tensors

    wav_dir = Path(wav_dir)
    paths = sorted(wav_dir.rglob("*.wav"))
    if not paths:
        raise ContractError(f"no .wav files under {wav_dir}")
    specs = {
        str(p.relative_to(wav_dir)): standardize(logmel(load_wav(p)))
        for p in paths
    }
    save_tensors(out_path, specs)
    return len(specs)


def load_cached_spectrograms(path: str | Path) -> dict[str, np.ndarray]:
    from .container import load_tensors

    return load_tensors(path)
