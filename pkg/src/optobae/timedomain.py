"""Stochastic time-domain oracle for the linear quadrature dynamics.

The Langevin system ``ẋ = A x + B n(t)`` of :mod:`optobae.freq_solver` is
integrated with an exact discretization: over one step of length ``dt`` the
state map is ``exp(A dt)``.  The noise increment, the step-averaged state,
and the step-averaged input noise are drawn jointly from their exact Gaussian
covariance (Van Loan construction).  Output records are step averages

    β̄_k = -ᾱ_k + √(2γ) ḡ_k,

built from the same noise that drives the state.  White inputs are real
Gaussian processes with ``<n_j(t) n_j(t')> = (S_j/2) δ(t-t')``, i.e. the
package-wide single-sided PSD ``S_j``.

Records are combined offline in the frequency domain.  numpy's FFT kernel
``e^{-2πi f t}`` is the package kernel ``e^{iΩt}`` at ``Ω = -2π f``, so FFT
bin ``f`` holds the package amplitude at that Ω and a weight ``w(Ω)``
multiplies it directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .freq_solver import (
    F_A, F_PHI, FORCE_INPUTS, OUTPUT_LABELS, drift_matrix, input_matrix, input_psd,
)
from .model import SignalPulse, SystemParams

#: default integrator accuracy bound on dt·γ
MAX_DT_GAMMA = 0.05
MIN_SEGMENTS = 8
CSV_HEADER = "single-sided PSD, rotating frame, Omega in rad per unit time"


class InstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Sampled records of one run.

    ``outputs`` has shape ``(n, 4)`` (step averages of β in
    :data:`~optobae.freq_solver.OUTPUT_LABELS` order).  ``states`` holds the
    state at the start of every step in the solver basis, shape ``(n + 1, 6)``,
    or is ``None`` when not stored.  ``final_state`` allows continuation.
    """

    dt: float
    outputs: np.ndarray
    states: np.ndarray | None
    final_state: np.ndarray

    @property
    def time(self) -> np.ndarray:
        return self.dt * np.arange(self.outputs.shape[0])

    def to_csv(self, path) -> None:
        data = np.column_stack([self.time, self.outputs])
        np.savetxt(path, data, delimiter=",",
                   header=f"{CSV_HEADER}\nt," + ",".join(OUTPUT_LABELS))


@dataclass(frozen=True)
class PsdEstimate:
    frequencies: np.ndarray
    values: np.ndarray
    segment_count: int
    relative_std: float
    segment_values: np.ndarray | None = field(default=None, repr=False)

    def band(self, lo: float, hi: float) -> np.ndarray:
        return (self.frequencies >= lo) & (self.frequencies <= hi)

    def band_average(self, lo: float, hi: float, reference=None):
        """Band average with its standard error over segments.

        If ``reference`` (a callable of Ω or an array on :attr:`frequencies`)
        is given, the values are divided by it first.  Returns ``(mean, sem)``.
        """
        sel = self.band(lo, hi)
        if not np.any(sel):
            raise ValueError(f"no frequency bins in band [{lo}, {hi}]")
        ref = 1.0
        if reference is not None:
            ref = reference(self.frequencies[sel]) if callable(reference) else np.asarray(reference)[sel]
        per_seg = (self.segment_values[:, sel] / ref).mean(axis=1)
        return float(per_seg.mean()), float(per_seg.std(ddof=1) / math.sqrt(len(per_seg)))

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.frequencies, self.values]), delimiter=",",
                   header=f"{CSV_HEADER}; segments={self.segment_count}\nOmega,psd")


def _van_loan(A, Bn, Sc, Bf, dt):
    """Exact one-step maps for the state, its step integral, and the noise integral.

    Augmented state ``y = (x, ∫x, ∫n)`` with ``ẏ = Ā y + B̄ n``.  Returns the
    deterministic maps for ``x`` and ``∫x`` (given ``x_k`` and a constant
    force ``u``), and the joint covariance of the stochastic parts.
    """
    n, m = A.shape[0], Bn.shape[1]
    N = 2 * n + m
    Abar = np.zeros((N, N))
    Abar[:n, :n] = A
    Abar[n:2 * n, :n] = np.eye(n)
    Bbar = np.zeros((N, m))
    Bbar[:n] = Bn
    Bbar[2 * n:] = np.eye(m)
    # covariance: exp([[-Ā, Q], [0, Āᵀ]] dt)
    vl = np.zeros((2 * N, 2 * N))
    vl[:N, :N] = -Abar
    vl[:N, N:] = Bbar @ Sc @ Bbar.T
    vl[N:, N:] = Abar.T
    E = linalg.expm(vl * dt)
    F = E[N:, N:].T
    cov = F @ E[:N, N:]
    cov = 0.5 * (cov + cov.T)
    # deterministic response to a constant force: exp([[A, Bf], [0, 0]]) with integral row
    k = Bf.shape[1]
    D = np.zeros((2 * n + k, 2 * n + k))
    D[:n, :n] = A
    D[:n, 2 * n:] = Bf
    D[n:2 * n, :n] = np.eye(n)
    Ed = linalg.expm(D * dt)
    return {
        "phi": F[:n, :n], "gamma": F[n:2 * n, :n],
        "gain_x": Ed[:n, 2 * n:], "gain_X": Ed[n:2 * n, 2 * n:],
        "cov": cov,
    }


def _cov_sqrt(cov):
    w, V = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


class LangevinIntegrator:
    """Exact-discretization integrator for one parameter set and step size."""

    def __init__(self, params: SystemParams, dt: float, check_dt: bool = True):
        if not dt > 0:
            raise ValueError("dt must be > 0")
        if check_dt and dt * params.gamma > MAX_DT_GAMMA * (1 + 1e-12):
            raise ValueError(f"dt*gamma = {dt * params.gamma:g} exceeds {MAX_DT_GAMMA}")
        A = drift_matrix(params)
        eig = np.linalg.eigvals(A)
        if np.any(eig.real >= 0):
            raise InstabilityError(f"unstable drift, eigenvalues {eig}")
        B = input_matrix(params)
        self.params, self.dt = params, dt
        s = input_psd(params)[:6]
        Sc = np.diag(s / 2.0)  # two-sided densities of the six noise inputs
        Bn = B[:, :6]
        Bf = B[:, FORCE_INPUTS]
        maps = _van_loan(A, Bn, Sc, Bf, dt)
        self.phi = maps["phi"]
        self.gamma_map = maps["gamma"]
        self.gain_x, self.gain_X = maps["gain_x"], maps["gain_X"]
        self.noise_sqrt = _cov_sqrt(maps["cov"])
        self.stationary_cov = linalg.solve_continuous_lyapunov(A, -Bn @ Sc @ Bn.T)
        self._stat_sqrt = _cov_sqrt(0.5 * (self.stationary_cov + self.stationary_cov.T))
        T, Z = linalg.schur(self.phi, output="complex")
        self._T, self._Z = T, Z

    def stationary_sample(self, rng: np.random.Generator) -> np.ndarray:
        return self._stat_sqrt @ rng.standard_normal(6)

    def _propagate(self, x0, drive):
        """States ``x_0..x_n`` of ``x_{k+1} = Φ x_k + drive_k`` via Schur + lfilter."""
        T, Z = self._T, self._Z
        n = drive.shape[0]
        u = drive @ Z.conj()
        y = np.empty((n + 1, 6), dtype=complex)
        y[0] = Z.conj().T @ x0
        for i in range(5, -1, -1):
            v = u[:, i] + y[:n, i + 1:] @ T[i, i + 1:]
            out, _ = signal.lfilter([1.0], [1.0, -T[i, i]], v, zi=[T[i, i] * y[0, i]])
            y[1:, i] = out
        return (y @ Z.T).real

    def run(self, n_steps: int, rng: np.random.Generator, x0=None, force=None,
            store_states: bool = False) -> Trajectory:
        """Advance ``n_steps``; ``force`` is an optional ``(n_steps, 2)`` array of
        per-step constant ``(f_a, f_phi)``."""
        x0 = self.stationary_sample(rng) if x0 is None else np.asarray(x0, dtype=float)
        w = rng.standard_normal((n_steps, self.noise_sqrt.shape[1])) @ self.noise_sqrt.T
        wx, wX, wN = w[:, :6], w[:, 6:12], w[:, 12:18]
        drive = wx
        if force is not None:
            force = np.asarray(force, dtype=float)
            drive = drive + force @ self.gain_x.T
            wX = wX + force @ self.gain_X.T
        x = self._propagate(x0, drive)
        X = x[:-1] @ self.gamma_map.T + wX
        root = math.sqrt(2.0 * self.params.gamma)
        outputs = (-wN[:, :4] + root * X[:, :4]) / self.dt
        return Trajectory(self.dt, outputs, x if store_states else None, x[-1].copy())


def pulse_force(pulse: SignalPulse, n_steps: int, dt: float, t0: float) -> np.ndarray:
    """Per-step force ``(f_a, f_phi)`` for a square pulse centred at ``t0``.

    Each step carries the pulse value averaged over the step, so partially
    covered edge steps get a fractional amplitude.
    """
    edges = dt * np.arange(n_steps + 1)
    lo, hi = t0 - pulse.tau / 2, t0 + pulse.tau / 2
    overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None) / dt
    fa, fphi = pulse.quadratures
    return np.column_stack([overlap * fa, overlap * fphi])


def integrate(params: SystemParams, pulse: SignalPulse | None, duration: float, dt: float,
              seed, store_states: bool = True, t0: float | None = None) -> Trajectory:
    """Integrate from a stationary initial state; the pulse is centred at ``t0``
    (default: middle of the run)."""
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration shorter than one step")
    rng = np.random.default_rng(seed)
    integ = LangevinIntegrator(params, dt)
    force = None
    if pulse is not None:
        force = pulse_force(pulse, n, dt, duration / 2 if t0 is None else t0)
    return integ.run(n, rng, force=force, store_states=store_states)


def fft_omega(n: int, dt: float) -> np.ndarray:
    """Package-convention angular frequencies of the ``rfft`` bins (``Ω = -2π f``)."""
    return -2.0 * math.pi * np.fft.rfftfreq(n, dt)


def _weights_on_grid(selector, n: int, dt: float) -> np.ndarray:
    if callable(selector):
        return np.asarray(selector(fft_omega(n, dt)), dtype=complex)
    return np.broadcast_to(np.asarray(selector, dtype=complex), (n // 2 + 1, 4))


def combine_records(records: np.ndarray, dt: float, selector) -> np.ndarray:
    """One record channel, or a frequency-weighted combination of all four.

    The combination is applied with a single FFT over the whole array, i.e.
    circularly; callers discard edge samples (see :class:`StreamCombiner`).
    """
    if isinstance(selector, (int, np.integer, str)):
        idx = OUTPUT_LABELS.index(selector) if isinstance(selector, str) else int(selector)
        return np.asarray(records[:, idx], dtype=float)
    n = records.shape[0]
    w = _weights_on_grid(selector, n, dt)
    spec = np.fft.rfft(records, axis=0)
    return np.fft.irfft(np.einsum("fk,fk->f", w, spec), n=n)


class StreamCombiner:
    """Overlap-save application of frequency-dependent weights to a stream.

    Weights such as ``K/(γ_m - iΩ)`` vary on the scale of the mechanical
    linewidth, finer than a Welch bin, so they are applied to the continuous
    stream before segmentation.  ``margin`` samples on each side of every
    block are discarded; it must exceed the memory of the weight's impulse
    response.  The first ``margin`` input samples are consumed as warm-up.
    """

    def __init__(self, selector, dt: float, margin: int, block: int | None = None):
        self.selector, self.dt, self.margin = selector, dt, int(margin)
        self.block = int(block) if block is not None else max(2 * self.margin, 1 << 16)
        self._buf = np.empty((0, 4))
        self._direct = isinstance(selector, (int, np.integer, str))

    def push(self, records: np.ndarray) -> np.ndarray:
        if self._direct:
            return combine_records(records, self.dt, self.selector)
        self._buf = np.concatenate([self._buf, records])
        m = self.margin
        out = []
        while self._buf.shape[0] >= 2 * m + self.block:
            y = combine_records(self._buf, self.dt, self.selector)
            out.append(y[m:-m] if m else y)
            self._buf = self._buf[self._buf.shape[0] - 2 * m:]
        return np.concatenate(out) if out else np.empty(0)


def default_margin(params: SystemParams, dt: float, decay_times: float = 30.0) -> int:
    """Overlap margin covering ``decay_times`` mechanical decay times."""
    n = int(math.ceil(decay_times / (params.gamma_m * dt)))
    return 1 << max(n - 1, 1).bit_length()


def _periodograms(segs: np.ndarray, dt: float) -> np.ndarray:
    """Single-sided Hann periodograms of ``(segments, L)`` real data."""
    L = segs.shape[1]
    window = signal.windows.hann(L, sym=False)
    X = np.fft.rfft(segs * window, axis=1)
    P = 2.0 * dt * np.abs(X) ** 2 / np.sum(window**2)
    P[:, 0] /= 2.0
    if L % 2 == 0:
        P[:, -1] /= 2.0
    return P


def _estimate(data: np.ndarray, dt: float, segment_length: int, min_segments: int) -> PsdEstimate:
    if segment_length > data.shape[0]:
        raise ValueError("segment_length exceeds the number of samples")
    n_seg = data.shape[0] // segment_length
    if n_seg < min_segments:
        raise ValueError(f"only {n_seg} segments; need at least {min_segments}")
    P = _periodograms(data[: n_seg * segment_length].reshape(n_seg, segment_length), dt)
    freqs = np.abs(fft_omega(segment_length, dt))
    return PsdEstimate(freqs, P.mean(axis=0), n_seg, 1.0 / math.sqrt(n_seg), P)


def estimate_psd(trajectory: Trajectory, channel=1, segment_length: int = 4096,
                 min_segments: int = MIN_SEGMENTS, margin: int = 0) -> PsdEstimate:
    """Hann-windowed, non-overlapping averaged periodogram.

    ``channel`` is an output index/label, a constant 4-vector of weights, or
    a callable ``w(Ω) -> (..., 4)`` returning output weights per frequency.
    Combinations are formed over the whole record before segmentation and
    ``margin`` samples are dropped from both ends.  Frequencies are reported
    as ``|Ω|``.
    """
    data = combine_records(trajectory.outputs, trajectory.dt, channel)
    if margin:
        data = data[margin:-margin]
    return _estimate(data, trajectory.dt, segment_length, min_segments)


def simulate_psd(params: SystemParams, channels: dict, segment_length: int, segments: int,
                 dt: float, seed, chunk_segments: int = 16, margin: int | None = None) -> dict:
    """Stream a long stationary run and estimate several channel PSDs at once.

    ``channels`` maps names to selectors accepted by :func:`estimate_psd`.
    Segments are contiguous and non-overlapping; records are never stored in
    full.
    """
    if segments < MIN_SEGMENTS:
        raise ValueError(f"need at least {MIN_SEGMENTS} segments")
    margin = default_margin(params, dt) if margin is None else margin
    rng = np.random.default_rng(seed)
    integ = LangevinIntegrator(params, dt)
    combiners = {name: StreamCombiner(sel, dt, margin) for name, sel in channels.items()}
    pending = {name: np.empty(0) for name in channels}
    per = {name: [] for name in channels}
    counts = dict.fromkeys(channels, 0)
    x = None
    chunk = chunk_segments * segment_length
    while min(counts.values()) < segments:
        traj = integ.run(chunk, rng, x0=x)
        x = traj.final_state
        for name, comb in combiners.items():
            data = np.concatenate([pending[name], comb.push(traj.outputs)])
            k = min(data.shape[0] // segment_length, segments - counts[name])
            if k:
                segs = data[: k * segment_length].reshape(k, segment_length)
                per[name].append(_periodograms(segs, dt))
                counts[name] += k
            pending[name] = data[k * segment_length:]
    freqs = np.abs(fft_omega(segment_length, dt))
    out = {}
    for name, chunks in per.items():
        P = np.concatenate(chunks)
        out[name] = PsdEstimate(freqs, P.mean(axis=0), segments, 1.0 / math.sqrt(segments), P)
    return out


@dataclass(frozen=True)
class DetectionResult:
    estimates: np.ndarray
    snr: float
    detection_rate: float
    threshold: float
    expected_std: float


def matched_filter_setup(params: SystemParams, pulse: SignalPulse, weights_fn, n: int, dt: float,
                         t0: float):
    """Frequency-domain matched filter for a pulse seen through a combination.

    Returns ``(omega, weights, template, noise_psd)`` on the rfft grid:
    ``template`` is the combined-record spectrum per unit ``f_s0`` and
    ``noise_psd`` the combined-record noise PSD.
    """
    from .freq_solver import transfer_matrix

    omega = fft_omega(n, dt)
    w = np.asarray(weights_fn(omega), dtype=complex)
    h = np.einsum("fk,fkj->fj", w, transfer_matrix(params, omega).outputs)
    noise_psd = (np.abs(h) ** 2 * input_psd(params)).sum(axis=-1)
    unit = SignalPulse(1.0, pulse.tau, pulse.psi_f)
    per_step = pulse_force(unit, n, dt, t0)
    F = np.fft.rfft(per_step, axis=0) * dt
    template = h[:, F_A] * F[:, 0] + h[:, F_PHI] * F[:, 1]
    return omega, w, template, noise_psd


def run_detection_experiment(params: SystemParams, pulse: SignalPulse, weights_fn, trials: int,
                             seed, dt: float = 0.05, record_factor: float = 8.0,
                             threshold: float | None = None) -> DetectionResult:
    """Matched-filter estimates of ``f_s0`` over independent trials.

    Each trial is a fresh stationary run of length ``record_factor·τ`` with
    the pulse centred.  The estimator is the optimal linear filter for the
    combined record in its (known) stationary noise, normalized to be
    unbiased.  ``snr = mean / std`` of the estimates; ``detection_rate`` is
    the fraction of trials whose estimate exceeds ``threshold`` (default the
    expected estimator standard deviation, i.e. unit SNR).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n = int(round(record_factor * pulse.tau / dt))
    t0 = n * dt / 2
    integ = LangevinIntegrator(params, dt)
    omega, w, template, noise_psd = matched_filter_setup(params, pulse, weights_fn, n, dt, t0)
    # one-sided sum over rfft bins; interior bins count twice
    mult = np.full(omega.shape, 2.0)
    mult[0] = 1.0
    if n % 2 == 0:
        mult[-1] = 1.0
    kernel = mult * np.conj(template) / noise_psd
    norm = float(np.real(np.sum(kernel * template)))
    # E|Y_f|² = n·dt·S/2 per interior bin and the real part keeps half of it
    expected_std = math.sqrt(n * dt / (2.0 * norm))
    force = pulse_force(pulse, n, dt, t0)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    est = np.empty(trials)
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        traj = integ.run(n, rng, force=force)
        Y = np.fft.rfft(traj.outputs, axis=0) * dt
        y = np.einsum("fk,fk->f", w, Y)
        est[i] = float(np.real(np.sum(kernel * y))) / norm
    thr = expected_std if threshold is None else threshold
    sd = float(est.std(ddof=1)) if trials > 1 else float("nan")
    return DetectionResult(est, float(est.mean() / sd) if trials > 1 else float("nan"),
                           float(np.mean(est > thr)), thr, expected_std)
