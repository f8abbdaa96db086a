"""Reproducible simulation scenarios.

Two families are provided: a uniform linear array facing Gaussian
interferers in white noise, and an airborne space-time (STAP) geometry with
compound-Gaussian clutter. Each builder returns a :class:`ScenarioRealization`
holding the true covariance, the steering vector of interest and a
deterministic snapshot sampler keyed by ``(seed, trial_index)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .beamforming import SteeringVector
from .errors import GenerationFailureError, InvalidInputError
from .estimators import HermitianEstimate, Provenance, ShrinkageTarget, SnapshotSet, as_matrix

# stream tags for independent per-trial random streams
STREAM_SPECKLE = 1
STREAM_NOISE = 2
STREAM_TEXTURE = 3
STREAM_TARGET = 4


def trial_rng(seed: int, trial_index: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (seed, trial, stream) triple.

    Streams do not depend on the order in which trials are drawn, so trials
    can be generated concurrently.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian ``CN(0, var)`` entries."""
    g = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return np.sqrt(var / 2.0) * (g[..., 0] + 1j * g[..., 1])


@dataclass(frozen=True)
class UlaScenarioSpec:
    n_antennas: int = 20
    interferer_doas_deg: tuple[float, ...] = tuple(float(a) for a in range(30, 71, 5))
    inr_db: float = 30.0
    noise_power: float = 1.0
    target_doa_deg: float = 0.0
    element_spacing: float = 0.5
    normalize_trace: bool = False

    def __post_init__(self):
        if self.n_antennas < 2:
            raise InvalidInputError("a ULA needs at least two antennas")
        for a in (*self.interferer_doas_deg, self.target_doa_deg):
            if not -90.0 < a < 90.0:
                raise InvalidInputError(f"angle {a} deg outside (-90, 90)")
        if not self.noise_power > 0:
            raise InvalidInputError("noise power must be positive")
        object.__setattr__(self, "interferer_doas_deg",
                           tuple(float(a) for a in self.interferer_doas_deg))


@dataclass(frozen=True)
class StapScenarioSpec:
    n_pulses: int = 8
    n_elements: int = 4
    n_clutter_patches: int = 401
    nu: float = 4.5
    cnr: float = 1000.0
    noise_power: float = 1.0
    target_fd: float = 0.2
    target_fs: float = 0.5
    carrier_hz: float = 1.2e9
    prf_hz: float = 2e3
    platform_velocity: float = 125.0
    element_spacing: float = 0.5
    normalize_trace: bool = False
    training_matches_cut: bool = True

    def __post_init__(self):
        if self.n_pulses < 1 or self.n_elements < 1 or self.n_pulses * self.n_elements < 2:
            raise InvalidInputError("need N = n_pulses * n_elements >= 2")
        if not self.nu > 0:
            raise InvalidInputError("texture shape nu must be positive")
        if self.n_clutter_patches < 1:
            raise InvalidInputError("need at least one clutter patch")
        if not self.cnr > 0 or not self.noise_power > 0:
            raise InvalidInputError("CNR and noise power must be positive")

    @property
    def n(self) -> int:
        return self.n_pulses * self.n_elements


@dataclass(frozen=True)
class ScenarioRealization:
    r_true: HermitianEstimate
    s: SteeringVector
    sampler: Callable[[int, int, int], SnapshotSet] = field(repr=False)
    model: str = "gaussian"

    @property
    def n(self) -> int:
        return self.r_true.n

    def snapshots(self, seed: int, trial_index: int, l_count: int) -> SnapshotSet:
        return self.sampler(seed, trial_index, l_count)


def ula_steering(theta_deg: float, n: int, spacing_wavelengths: float = 0.5) -> SteeringVector:
    """ULA response ``[1, e^{j 2 pi d sin(theta)}, ...]`` with unit-modulus entries."""
    phase = 2.0 * np.pi * spacing_wavelengths * np.sin(np.deg2rad(theta_deg))
    return SteeringVector(np.exp(1j * phase * np.arange(n)))


def _ramp(f: float, m: int) -> np.ndarray:
    return np.exp(2j * np.pi * f * np.arange(m))


def spacetime_steering(fd: float, fs: float, nt: int, ns: int) -> SteeringVector:
    """Temporal ramp (Doppler ``fd``) Kronecker spatial ramp (frequency ``fs``)."""
    if nt < 1 or ns < 1:
        raise InvalidInputError("nt and ns must be >= 1")
    return SteeringVector(np.kron(_ramp(fd, nt), _ramp(fs, ns)))


def _trace_gain(r_true: np.ndarray, normalize: bool) -> float:
    """Power gain that brings ``r_true`` to trace ``N`` (1 when not requested)."""
    return r_true.shape[0] / np.trace(r_true).real if normalize else 1.0


def build_ula_scenario(spec: UlaScenarioSpec | None = None) -> ScenarioRealization:
    """Interferers of equal power ``10^(INR/10) * sigma^2`` plus white noise.

    With ``spec.normalize_trace`` both ``r_true`` and the snapshots are scaled
    so that ``Tr(r_true) = N``.
    """
    spec = spec or UlaScenarioSpec()
    n = spec.n_antennas
    power = 10.0 ** (spec.inr_db / 10.0) * spec.noise_power
    cols = [np.sqrt(power) * ula_steering(a, n, spec.element_spacing).s
            for a in spec.interferer_doas_deg]
    mixing = np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=complex)
    r_true = mixing @ mixing.conj().T + spec.noise_power * np.eye(n)
    gain = _trace_gain(r_true, spec.normalize_trace)
    r_true = r_true * gain
    amp = np.sqrt(gain)

    def sampler(seed: int, trial_index: int, l_count: int) -> SnapshotSet:
        waveforms = complex_normal(trial_rng(seed, trial_index, STREAM_SPECKLE),
                                   (mixing.shape[1], l_count))
        noise = complex_normal(trial_rng(seed, trial_index, STREAM_NOISE), (n, l_count),
                               spec.noise_power)
        x = mixing @ waveforms + noise
        return SnapshotSet(x if gain == 1.0 else amp * x, "gaussian")

    return ScenarioRealization(HermitianEstimate(r_true, Provenance.ORACLE),
                               ula_steering(spec.target_doa_deg, n, spec.element_spacing),
                               sampler, "gaussian")


def clutter_frequencies(spec: StapScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    """Normalized Doppler and spatial frequencies of the clutter patches.

    Patch azimuths form a half-open uniform grid over [0, 180) degrees.
    """
    wavelength = SPEED_OF_LIGHT / spec.carrier_hz
    phi = np.deg2rad(180.0 * np.arange(spec.n_clutter_patches) / spec.n_clutter_patches)
    fd = 2.0 * spec.platform_velocity / (wavelength * spec.prf_hz) * np.cos(phi)
    fs = spec.element_spacing * np.cos(phi)
    return fd, fs


def build_stap_scenario(spec: StapScenarioSpec | None = None) -> ScenarioRealization:
    """Compound-Gaussian clutter plus noise on an ``N_t x N_s`` space-time aperture.

    The reported covariance is that of the cell under test,
    ``tau_0 A A^H + sigma^2 I`` with ``tau_0 = CNR sigma^2 / N_c``. Training
    snapshots are ``sqrt(tau_l) A e_l + n_l`` with Gamma(nu, 1/nu) textures.
    Patch gains have variance ``tau_0`` so that the training covariance
    equals ``r_true``; with ``training_matches_cut=False`` they have unit
    variance, so the training clutter power is ``1 / tau_0`` times that of
    the cell under test.
    """
    spec = spec or StapScenarioSpec()
    n, nt, ns = spec.n, spec.n_pulses, spec.n_elements
    fd, fs = clutter_frequencies(spec)
    mixing = np.stack([spacetime_steering(a, b, nt, ns).s for a, b in zip(fd, fs)], axis=1)
    tau0 = spec.cnr * spec.noise_power / spec.n_clutter_patches
    r_true = tau0 * (mixing @ mixing.conj().T) + spec.noise_power * np.eye(n)
    gain_var = tau0 if spec.training_matches_cut else 1.0
    gain = _trace_gain(r_true, spec.normalize_trace)
    r_true = r_true * gain
    amp = np.sqrt(gain)

    def sampler(seed: int, trial_index: int, l_count: int) -> SnapshotSet:
        gains = complex_normal(trial_rng(seed, trial_index, STREAM_SPECKLE),
                               (spec.n_clutter_patches, l_count), gain_var)
        noise = complex_normal(trial_rng(seed, trial_index, STREAM_NOISE), (n, l_count),
                               spec.noise_power)
        tau = sample_texture(trial_rng(seed, trial_index, STREAM_TEXTURE), spec.nu, l_count)
        y = np.sqrt(tau)[None, :] * (mixing @ gains) + noise
        return SnapshotSet(y if gain == 1.0 else amp * y, "compound-gaussian")

    return ScenarioRealization(HermitianEstimate(r_true, Provenance.ORACLE),
                               spacetime_steering(spec.target_fd, spec.target_fs, nt, ns),
                               sampler, "compound-gaussian")


def sample_texture(rng: np.random.Generator, nu: float, size: int) -> np.ndarray:
    """Gamma textures with shape ``nu`` and scale ``1/nu`` (unit mean)."""
    return rng.gamma(nu, 1.0 / nu, size)


def knowledge_target(r_true, sigma_t2: float, rng, max_tries: int = 10) -> ShrinkageTarget:
    """Prior-knowledge target ``R o t t^T`` with ``t ~ N(1, sigma_t2)`` entrywise.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed. The draw is
    repeated up to ``max_tries`` times if the result is not positive-definite.
    """
    if sigma_t2 < 0:
        raise InvalidInputError("sigma_t2 is a variance and must be >= 0")
    r = as_matrix(r_true)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    for _ in range(max_tries):
        t = 1.0 + np.sqrt(sigma_t2) * gen.standard_normal(r.shape[0])
        try:
            return ShrinkageTarget(r * np.outer(t, t))
        except InvalidInputError:
            continue
    raise GenerationFailureError(
        f"knowledge target not positive-definite after {max_tries} draws")
