"""Synthetic multi-lead ECG from Gaussian wave bumps.

Each beat is a sum of five Gaussian bumps (P, Q, R, S, T) placed relative
to the R peak. A fixed lead-mixing matrix turns the five wave sources into
up to twelve leads. Amplitudes are in microvolts, so after the 1e-3
rescale of :func:`~ecgxai.signal.filters.preprocess` signals are O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import Dataset, TimeSeriesInstance

WAVES = ("P", "Q", "R", "S", "T")
PATHOLOGIES = ("none", "absent_p_irregular_rr", "slow_rate", "st_depress_t_invert")
LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")

# wave centre relative to the R peak, seconds
WAVE_OFFSETS_S = np.array([-0.18, -0.035, 0.0, 0.035, 0.28])
BASE_AMPLITUDES_UV = np.array([150.0, -120.0, 1100.0, -250.0, 300.0])
DEFAULT_WIDTHS_S = np.array([0.022, 0.010, 0.012, 0.011, 0.045])

# rows follow LEAD_NAMES, columns follow WAVES
LEAD_MIXING = np.array([
    [0.8, 0.5, 0.6, 0.4, 0.7],
    [1.0, 0.8, 1.0, 0.6, 1.0],
    [0.3, 0.4, 0.5, 0.5, 0.3],
    [-0.8, -0.6, -0.8, -0.5, -0.8],
    [0.3, 0.2, 0.2, 0.3, 0.2],
    [0.6, 0.6, 0.7, 0.5, 0.6],
    [0.4, 0.1, 0.3, 1.6, -0.2],
    [0.5, 0.1, 0.6, 2.0, 0.8],
    [0.5, 0.3, 1.0, 1.4, 1.0],
    [0.5, 0.5, 1.4, 0.9, 1.0],
    [0.5, 0.6, 1.3, 0.5, 0.8],
    [0.5, 0.6, 1.0, 0.3, 0.6],
])

AF_MIN_JITTER = 0.25
SLOW_MIN_RR_S = 1.2
ST_DEPRESSION = 0.12  # fraction of |R| amplitude
ST_WINDOW_S = (0.06, 0.22)


@dataclass
class NoiseConfig:
    powerline_hz: float = 50.0
    powerline_amp: float = 0.0
    wander_hz: float = 0.15
    wander_amp: float = 0.0
    white_sigma: float = 0.0


@dataclass
class SynthConfig:
    """Parameters of one synthetic record.

    ``wave_amplitudes`` has shape (n_leads, 5) in microvolts, columns in
    P, Q, R, S, T order; ``wave_widths_s`` holds the five Gaussian widths.
    """

    rr_interval_s: float = 0.8
    rr_jitter: float = 0.02
    wave_amplitudes: np.ndarray = field(
        default_factory=lambda: BASE_AMPLITUDES_UV * LEAD_MIXING
    )
    wave_widths_s: np.ndarray = field(default_factory=lambda: DEFAULT_WIDTHS_S.copy())
    pathology: str = "none"
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    sample_rate_hz: float = 500.0

    def __post_init__(self):
        self.wave_amplitudes = np.atleast_2d(np.asarray(self.wave_amplitudes, dtype=float))
        self.wave_widths_s = np.asarray(self.wave_widths_s, dtype=float)

    @property
    def n_leads(self) -> int:
        return self.wave_amplitudes.shape[0]

    def validate(self) -> None:
        if self.pathology not in PATHOLOGIES:
            raise ValueError(f"unknown pathology {self.pathology!r}")
        if not self.rr_interval_s > 0:
            raise ValueError("rr_interval_s must be positive")
        if not 0 <= self.rr_jitter < 1:
            raise ValueError("rr_jitter must lie in [0, 1)")
        if self.wave_amplitudes.shape[1] != 5:
            raise ValueError("wave_amplitudes needs one column per wave P, Q, R, S, T")
        if self.wave_widths_s.shape != (5,) or np.any(self.wave_widths_s <= 0):
            raise ValueError("wave_widths_s must be 5 positive widths")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.noise.wander_hz > 0.3:
            raise ValueError("wander_hz must not exceed 0.3 Hz")

    def effective_rr(self) -> float:
        if self.pathology == "slow_rate":
            return max(self.rr_interval_s, SLOW_MIN_RR_S)
        return self.rr_interval_s

    def effective_jitter(self) -> float:
        if self.pathology == "absent_p_irregular_rr":
            return max(self.rr_jitter, AF_MIN_JITTER)
        return self.rr_jitter


def default_config(n_leads: int = 12, **kwargs) -> SynthConfig:
    """Config using the first ``n_leads`` rows of the mixing matrix."""
    if not 1 <= n_leads <= len(LEAD_NAMES):
        raise ValueError(f"n_leads must be in 1..{len(LEAD_NAMES)}")
    amps = BASE_AMPLITUDES_UV * LEAD_MIXING[:n_leads]
    return SynthConfig(wave_amplitudes=amps, **kwargs)


def _streams(seed: int):
    beat_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(beat_ss), np.random.default_rng(noise_ss)


def _beat_schedule(cfg: SynthConfig, duration_s: float, rng) -> np.ndarray:
    rr = cfg.effective_rr()
    jitter = cfg.effective_jitter()
    t = rng.uniform(0.0, rr) - rr  # one beat before the record so edges carry partial beats
    times = []
    while t < duration_s + rr:
        times.append(t)
        t += rr * (1.0 + jitter * rng.uniform(-1.0, 1.0))
    return np.array(times)


def beat_times(cfg: SynthConfig, duration_s: float) -> np.ndarray:
    """R-peak times (seconds) used by :func:`synth_ecg`, edge beats included."""
    beat_rng, _ = _streams(cfg.seed)
    return _beat_schedule(cfg, duration_s, beat_rng)


def _smooth_box(t, start, stop, tau=0.01):
    return 0.5 * (np.tanh((t - start) / tau) - np.tanh((t - stop) / tau))


def clean_waveform(cfg: SynthConfig, duration_s: float) -> np.ndarray:
    """Noise-free signal of shape (n_leads, n_samples)."""
    cfg.validate()
    if duration_s < 2 * cfg.effective_rr():
        raise ValueError("duration must cover at least two RR intervals")
    n = int(round(duration_s * cfg.sample_rate_hz))
    t = np.arange(n) / cfg.sample_rate_hz
    amps = cfg.wave_amplitudes.copy()
    if cfg.pathology == "absent_p_irregular_rr":
        amps[:, 0] = 0.0
    elif cfg.pathology == "st_depress_t_invert":
        amps[:, 4] = -amps[:, 4]

    sources = np.zeros((5, n))
    st = np.zeros(n)
    for r_time in beat_times(cfg, duration_s):
        centres = r_time + WAVE_OFFSETS_S
        near = np.abs(t - r_time) < 1.0
        tt = t[near]
        for w in range(5):
            sources[w, near] += np.exp(-0.5 * ((tt - centres[w]) / cfg.wave_widths_s[w]) ** 2)
        if cfg.pathology == "st_depress_t_invert":
            st[near] += _smooth_box(tt, r_time + ST_WINDOW_S[0], r_time + ST_WINDOW_S[1])

    out = amps @ sources
    if cfg.pathology == "st_depress_t_invert":
        out -= ST_DEPRESSION * np.abs(amps[:, 2:3]) * st[None, :]
    return out


def synth_ecg(cfg: SynthConfig, duration_s: float, label: int | None = None,
              id: str | None = None, age: float | None = None,
              sex: int | None = None) -> TimeSeriesInstance:
    """Generate one record; identical configs give byte-identical output."""
    out = clean_waveform(cfg, duration_s)
    _, noise_rng = _streams(cfg.seed)
    n = out.shape[1]
    t = np.arange(n) / cfg.sample_rate_hz
    nz = cfg.noise
    if nz.powerline_amp:
        phase = noise_rng.uniform(0, 2 * np.pi, size=(out.shape[0], 1))
        out = out + nz.powerline_amp * np.sin(2 * np.pi * nz.powerline_hz * t + phase)
    if nz.wander_amp:
        phase = noise_rng.uniform(0, 2 * np.pi, size=(out.shape[0], 1))
        out = out + nz.wander_amp * np.sin(2 * np.pi * nz.wander_hz * t + phase)
    if nz.white_sigma:
        out = out + noise_rng.normal(0.0, nz.white_sigma, size=out.shape)
    if label is None:
        label = int(cfg.pathology != "none")
    return TimeSeriesInstance(
        values=out,
        sample_rate_hz=cfg.sample_rate_hz,
        lead_names=list(LEAD_NAMES[: out.shape[0]]),
        label=label,
        id=id if id is not None else f"synth-{cfg.pathology}-{cfg.seed}",
        age=age,
        sex=sex,
    )


def make_dataset(n: int, pathology: str = "slow_rate", positive_fraction: float = 0.25,
                 n_leads: int = 2, sample_rate_hz: float = 200.0, duration_s: float = 10.0,
                 seed: int = 0, noise: NoiseConfig | None = None) -> Dataset:
    """Labelled synthetic cohort: ``pathology`` cases against normal rhythm controls.

    Per-record heart rate and amplitude vary; age and sex are drawn
    independently of the label.
    """
    if pathology == "none" or pathology not in PATHOLOGIES:
        raise ValueError(f"pathology must be one of {PATHOLOGIES[1:]}")
    rng = np.random.default_rng(seed)
    n_pos = int(round(n * positive_fraction))
    labels = np.array([1] * n_pos + [0] * (n - n_pos))
    rng.shuffle(labels)
    if noise is None:
        noise = NoiseConfig(powerline_amp=40.0, wander_amp=80.0, white_sigma=15.0)
    instances = []
    for i, lab in enumerate(labels):
        if lab and pathology == "slow_rate":
            rr = rng.uniform(1.25, 1.6)
        else:
            rr = rng.uniform(0.6, 0.95)
        scale = rng.uniform(0.95, 1.05)
        cfg = default_config(
            n_leads,
            rr_interval_s=rr,
            rr_jitter=0.03,
            pathology=pathology if lab else "none",
            noise=noise,
            seed=int(rng.integers(2**31)),
            sample_rate_hz=sample_rate_hz,
        )
        cfg.wave_amplitudes = cfg.wave_amplitudes * scale
        age = float(np.clip(rng.normal(60, 15), 18, 89))
        sex = int(rng.integers(2))
        instances.append(synth_ecg(cfg, duration_s, label=int(lab), id=f"rec{i:05d}",
                                   age=round(age, 1), sex=sex))
    return Dataset(instances)
