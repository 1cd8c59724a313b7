"""Layer-one filterbank front-ends.

Each analysis filter is a sine/cosine pair; the response on a region x_t of
the input frame is the energy

    energy_k = (w_k_sin . x_t)^2 + (w_k_cos . x_t)^2

evaluated at every region offset of the frame, giving a (regions x channels)
spectrogram. Two generated banks are provided: STFT bins on a linear grid
(truncated at f_max) and a geometrically spaced bank, both with an optional
cosine window. Energies are optionally compressed to log(eps + energy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import SAMPLE_RATE, AudioFrame, FrameGeometry

DEFAULT_EPS = 1e-11


@dataclass(frozen=True)
class FilterbankSpec:
    """Parameters of a generated filterbank.

    n_filters applies to the log-spaced bank; the STFT bank derives its
    channel count from the bin spacing and f_max. eps floors the logarithm
    when compress is on.
    """

    kind: str = "log_spaced"
    windowed: bool = True
    n_filters: int = 512
    f_min: float = 50.0
    f_max: float = 6000.0
    receptive_field: int = 4096
    compress: bool = True
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("stft", "log_spaced"):
            raise ValueError(f"unknown filterbank kind {self.kind!r}")
        if not (0.0 < self.f_min < self.f_max < SAMPLE_RATE / 2):
            raise ValueError("need 0 < f_min < f_max < Nyquist")
        if self.n_filters < 1:
            raise ValueError("n_filters must be >= 1")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")


@dataclass
class FilterPair:
    w_sin: np.ndarray
    w_cos: np.ndarray
    center_freq: float


@dataclass
class Filterbank:
    """Stacked filter pairs: rows of w_sin/w_cos are individual filters."""

    w_sin: np.ndarray  # (n_channels, receptive_field)
    w_cos: np.ndarray  # (n_channels, receptive_field)
    center_freqs: np.ndarray = field(repr=False)  # (n_channels,) Hz

    @property
    def n_channels(self) -> int:
        return self.w_sin.shape[0]

    @property
    def receptive_field(self) -> int:
        return self.w_sin.shape[1]

    def pairs(self) -> list[FilterPair]:
        return [
            FilterPair(self.w_sin[k], self.w_cos[k], float(self.center_freqs[k]))
            for k in range(self.n_channels)
        ]


@dataclass
class Spectrogram:
    values: np.ndarray  # (regions, n_channels)
    channel_freqs: np.ndarray
    compressed: bool


def cosine_window(receptive_field: int) -> np.ndarray:
    """Taper 1 - cos(2 pi t / N) over t = 0..N-1 (period = receptive field)."""
    t = np.arange(receptive_field, dtype=np.float64)
    return 1.0 - np.cos(2.0 * np.pi * t / receptive_field)


def log_spaced_freqs(spec: FilterbankSpec) -> np.ndarray:
    """Geometric grid f_k = f_min * (f_max/f_min)^(k/(n-1)), endpoints included."""
    n = spec.n_filters
    if n == 1:
        return np.array([spec.f_min])
    k = np.arange(n, dtype=np.float64)
    return spec.f_min * (spec.f_max / spec.f_min) ** (k / (n - 1))


def stft_freqs(spec: FilterbankSpec) -> np.ndarray:
    """Linear grid j * sr / N for j = 1.. up to the last bin at or below f_max."""
    bin_hz = SAMPLE_RATE / spec.receptive_field
    j_max = int(np.floor(spec.f_max / bin_hz))
    return np.arange(1, j_max + 1, dtype=np.float64) * bin_hz


def _build(freqs: np.ndarray, spec: FilterbankSpec) -> Filterbank:
    t = np.arange(spec.receptive_field, dtype=np.float64)
    phase = 2.0 * np.pi * freqs[:, None] * t[None, :] / SAMPLE_RATE
    w_sin = np.sin(phase)
    w_cos = np.cos(phase)
    if spec.windowed:
        win = cosine_window(spec.receptive_field)
        w_sin *= win
        w_cos *= win
    return Filterbank(w_sin, w_cos, freqs.copy())


def build_log_spaced(spec: FilterbankSpec) -> Filterbank:
    if spec.kind != "log_spaced":
        raise ValueError(f"spec kind is {spec.kind!r}, not log_spaced")
    return _build(log_spaced_freqs(spec), spec)


def build_stft(spec: FilterbankSpec) -> Filterbank:
    if spec.kind != "stft":
        raise ValueError(f"spec kind is {spec.kind!r}, not stft")
    return _build(stft_freqs(spec), spec)


def build(spec: FilterbankSpec) -> Filterbank:
    return build_stft(spec) if spec.kind == "stft" else build_log_spaced(spec)


# -- applying a bank ----------------------------------------------------------


def frame_regions(samples: np.ndarray, geom: FrameGeometry) -> np.ndarray:
    """View of the frame's analysis regions, shape (..., regions, rf)."""
    windows = np.lib.stride_tricks.sliding_window_view(
        samples, geom.receptive_field, axis=-1
    )
    return windows[..., :: geom.stride, :]


def region_energies(bank: Filterbank, regions: np.ndarray):
    """Sine/cosine inner products and their energy, each (..., regions, K)."""
    s = regions @ bank.w_sin.T
    c = regions @ bank.w_cos.T
    return s, c, s * s + c * c


def apply(
    bank: Filterbank, frame: AudioFrame | np.ndarray, geom: FrameGeometry,
    compress: bool = True, eps: float = DEFAULT_EPS,
) -> Spectrogram:
    """Run the bank over every region of a frame.

    Parameters
    ----------
    bank : Filterbank
        Filters of length geom.receptive_field.
    frame : AudioFrame or (frame_len,) array
    compress : bool
        Map energies through log(eps + energy).

    Returns
    -------
    Spectrogram with values of shape (geom.regions, bank.n_channels).
    """
    samples = frame.samples if isinstance(frame, AudioFrame) else np.asarray(frame)
    if bank.receptive_field != geom.receptive_field:
        raise ValueError(
            f"filter length {bank.receptive_field} != receptive field {geom.receptive_field}"
        )
    _, _, energy = region_energies(bank, frame_regions(samples, geom))
    values = np.log(eps + energy) if compress else energy
    return Spectrogram(values, bank.center_freqs.copy(), compress)


def apply_spec(bank: Filterbank, frame, geom: FrameGeometry, spec: FilterbankSpec) -> Spectrogram:
    return apply(bank, frame, geom, compress=spec.compress, eps=spec.eps)


class EnergyJacobian:
    """Accumulation rules for the energy map's derivatives at one frame.

    Gradients arrive with respect to the emitted values (energies, or
    log-compressed energies when eps is given) and are pushed back to the
    filter coefficients and to the frame samples:

        d energy[r,k] / d w_sin[k] = 2 (w_sin[k] . x_r) x_r
        d energy[r,k] / d x_r      = 2 (w_sin[k] . x_r) w_sin[k] + (cos term)
    """

    def __init__(
        self, bank: Filterbank, frame, geom: FrameGeometry,
        compress: bool = False, eps: float = DEFAULT_EPS,
    ):
        samples = frame.samples if isinstance(frame, AudioFrame) else np.asarray(frame)
        self.bank = bank
        self.geom = geom
        self.regions = frame_regions(samples, geom)
        self.s, self.c, self.energy = region_energies(bank, self.regions)
        self.compress = compress
        self.eps = eps

    def values(self) -> np.ndarray:
        return np.log(self.eps + self.energy) if self.compress else self.energy

    def _to_energy_grad(self, g: np.ndarray) -> np.ndarray:
        return g / (self.eps + self.energy) if self.compress else g

    def grad_filters(self, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Accumulate d(sum g*values)/d w_sin, d./d w_cos; each (K, rf)."""
        ge = self._to_energy_grad(np.asarray(g))
        dw_sin = (2.0 * ge * self.s).T @ self.regions
        dw_cos = (2.0 * ge * self.c).T @ self.regions
        return dw_sin, dw_cos

    def grad_frame(self, g: np.ndarray) -> np.ndarray:
        """Accumulate d(sum g*values)/d x over the whole frame."""
        ge = self._to_energy_grad(np.asarray(g))
        dregions = (2.0 * ge * self.s) @ self.bank.w_sin
        dregions += (2.0 * ge * self.c) @ self.bank.w_cos
        out = np.zeros(self.geom.frame_len, dtype=np.float64)
        for r in range(self.geom.regions):
            off = r * self.geom.stride
            out[off : off + self.geom.receptive_field] += dregions[r]
        return out


def jacobian(
    bank: Filterbank, frame, geom: FrameGeometry,
    compress: bool = False, eps: float = DEFAULT_EPS,
) -> EnergyJacobian:
    """Derivative rules of apply() at the given frame."""
    return EnergyJacobian(bank, frame, geom, compress=compress, eps=eps)
