"""
Observables extracted from coherence curves.

Decay fits (T2, T2*), Ramsey spectra, field sweeps, clock-transition hyperbola
fits, level-anticrossing scans and the bath coupling descriptor.
"""
import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, signal, stats
from scipy.interpolate import PchipInterpolator

from .cce import ClusterSet, CoherenceCurve, enumerate_clusters, simulate
from .errors import BranchResolutionError, FitRangeError, GCCEError, NumericalError, ValidationError
from .hamiltonian import (DEGENERACY_TOL, LevelSelection, build_electron_hamiltonian, select_qubit_levels,
                          spin_operators)

log = logging.getLogger(__name__)

N_BOUNDS = (0.5, 4.0)
PEAK_FACTOR = 3.0
ZERO_PAD = 4
REL_HEIGHT = 0.05


@dataclass(frozen=True)
class DecayFit:
    """Stretched-exponential fit ``a * exp(-(t / T)^n)``.

    ``T`` is in us. When ``lower_bound`` is set the data did not decay within the
    window and ``T`` is only the window length.
    """
    T: float
    n: float
    amplitude: float = 1.0
    residual: float = 0.0
    T_err: float = np.nan
    n_err: float = np.nan
    amplitude_err: float = np.nan
    mode: str = 'raw'
    lower_bound: bool = False

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError('fitted time must be positive')
        if not np.isfinite(self.residual):
            raise NumericalError('fit residual is not finite')


def _stretched(x, a, t, n):
    return a * np.exp(-(x / t) ** n)


def _as_series(curve):
    if isinstance(curve, CoherenceCurve):
        return curve.times, np.abs(curve.L)
    t, y = curve
    return np.asarray(t, dtype=np.float64), np.abs(np.asarray(y))


def envelope(t, y):
    """Upper envelope of ``y``: local maxima joined by monotone cubic interpolation.

    The first and last points are always kept as nodes.
    """
    y = np.asarray(y, dtype=np.float64)
    peaks, _ = signal.find_peaks(y)
    nodes = np.unique(np.concatenate([[0], peaks, [len(y) - 1]]))
    if len(nodes) < 2:
        return y.copy()
    return PchipInterpolator(t[nodes], y[nodes])(t)


def fit_decay(curve, mode='raw', n_bounds=N_BOUNDS, n=None):
    """Fit ``|L(t)|`` to ``a * exp(-(t / T)^n)``.

    Args:
        curve (CoherenceCurve or tuple): Curve, or ``(times, values)``. Undefined
            (NaN) points are skipped.
        mode (str): ``'raw'`` fits ``|L|`` directly; ``'envelope'`` fits the upper
            envelope, for oscillating Ramsey data.
        n_bounds (tuple): Bounds on the stretch exponent.
        n (float): Fix the exponent instead of fitting it.

    Returns:
        DecayFit.

    Raises:
        FitRangeError: If ``|L|`` never drops below ``a / e`` in the window.
    """
    t, y = _as_series(curve)
    keep = np.isfinite(y)
    t, y = t[keep], y[keep]
    if len(t) < 8:
        raise ValidationError('need at least 8 defined time points to fit a decay')
    if np.max(y) > 1 + 1e-6:
        raise ValidationError(f'|L| exceeds 1 (max {np.max(y):.8g})')
    if mode == 'envelope':
        y = envelope(t, y)
    elif mode != 'raw':
        raise ValidationError(f"mode must be 'raw' or 'envelope', got {mode!r}")
    a0 = y[0] if y[0] > 0 else 1.0
    below = np.flatnonzero(y < a0 / np.e)
    if len(below) == 0:
        raise FitRangeError(f'|L| stays above 1/e of its initial value up to t = {t[-1]:.6g} us')
    # fit in units of the 1/e crossing so that rescaling time rescales T exactly
    scale = t[below[0]]
    x = t / scale
    lo, hi = n_bounds
    if n is None:
        p0 = [a0, 1.0, min(max(2.0, lo), hi)]
        bounds = ([0, 1e-6, lo], [2, 1e6, hi])
        f = _stretched
    else:
        p0 = [a0, 1.0]
        bounds = ([0, 1e-6], [2, 1e6])
        f = lambda x, a, tt: _stretched(x, a, tt, n)  # noqa: E731
    try:
        popt, pcov = optimize.curve_fit(f, x, y, p0=p0, bounds=bounds, max_nfev=20000)
    except (RuntimeError, ValueError) as e:
        raise NumericalError(f'decay fit failed: {e}') from None
    resid = float(np.linalg.norm(f(x, *popt) - y))
    err = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else np.full(len(popt), np.nan)
    n_val = float(popt[2]) if n is None else float(n)
    n_err = float(err[2]) if n is None else 0.0
    return DecayFit(float(popt[1] * scale), n_val, float(popt[0]), resid, float(err[1] * scale), n_err,
                    float(err[0]), mode)


def fit_or_bound(curve, mode='raw', **kw):
    """Like :func:`fit_decay`, but returns a lower bound instead of raising :class:`FitRangeError`."""
    try:
        return fit_decay(curve, mode, **kw)
    except FitRangeError:
        t, _ = _as_series(curve)
        return DecayFit(float(t[-1]), np.nan, 1.0, 0.0, mode=mode, lower_bound=True)


def ensemble_time(fits):
    """Mean and median of fitted times over configurations (lower bounds included as their value)."""
    ts = np.array([f.T for f in fits], dtype=np.float64)
    return float(np.mean(ts)), float(np.median(ts))


def _uniform_step(t):
    if len(t) < 2:
        raise ValidationError('need at least two time points')
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1e-300) + 1e-12 * np.max(np.abs(t)):
        raise ValidationError('time grid is not uniform')
    return float(dt[0])


def ramsey_spectrum(curve, window='hann', frame_frequency=0.0, pad=ZERO_PAD):
    """Magnitude spectrum of Ramsey fringes.

    ``L(t)`` is first moved into a frame rotating at ``frame_frequency`` (MHz),
    i.e. multiplied by ``exp(2j pi f t)``; the real part is tapered, zero padded
    to ``pad`` times its length and Fourier transformed.

    Args:
        curve (CoherenceCurve or tuple): Curve, or ``(times, L)`` with complex ``L``.
        window (str or None): Any window name understood by ``scipy.signal.get_window``.
        frame_frequency (float): Rotating-frame frequency in MHz.
        pad (int): Zero padding factor.

    Returns:
        tuple: ``(frequencies, magnitude)``, frequencies in MHz from 0 to Nyquist.
    """
    if isinstance(curve, CoherenceCurve):
        t, L = curve.times, curve.L
    else:
        t, L = np.asarray(curve[0], dtype=np.float64), np.asarray(curve[1])
    dt = _uniform_step(t)
    x = np.real(L * np.exp(2j * np.pi * frame_frequency * t))
    if window:
        x = x * signal.get_window(window, len(x), fftbins=False)
    nfft = int(pad) * len(x)
    mag = np.abs(np.fft.rfft(x, nfft)) * dt
    return np.fft.rfftfreq(nfft, dt), mag


def find_peaks(freqs, mag, factor=PEAK_FACTOR, max_peaks=None, rel_height=REL_HEIGHT):
    """Spectral peaks above ``factor`` times the median magnitude.

    Peaks lower than ``rel_height`` times the tallest one are dropped as well, which
    removes the taper side lobes of slowly decaying fringes. Peak positions are
    refined by parabolic interpolation of the three bins around each maximum.

    Returns:
        tuple: ``(positions, heights)`` sorted by decreasing height.
    """
    floor = max(factor * np.median(mag), rel_height * np.max(mag))
    idx, _ = signal.find_peaks(mag, height=floor)
    pos, hts = [], []
    df = freqs[1] - freqs[0]
    for k in idx:
        if 0 < k < len(mag) - 1:
            y0, y1, y2 = mag[k - 1], mag[k], mag[k + 1]
            den = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
            pos.append(freqs[k] + shift * df)
            hts.append(y1 - 0.25 * (y0 - y2) * shift)
        else:
            pos.append(freqs[k])
            hts.append(mag[k])
    order = np.argsort(hts)[::-1]
    if max_peaks is not None:
        order = order[:max_peaks]
    return np.array(pos)[order], np.array(hts)[order]


@dataclass
class FieldSweepResult:
    """One coherence run per field of a sweep."""
    fields: np.ndarray
    curves: list
    fits: list = None
    spectra: list = None
    errors: dict = field(default_factory=dict)
    levels: list = None

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=np.float64)
        if len(f) > 1:
            d = np.diff(f)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValidationError('sweep fields must be strictly monotonic')
        self.fields = f

    def ok(self):
        """Indices of fields that produced a curve."""
        return [k for k, c in enumerate(self.curves) if c is not None]


def field_sweep(system, experiment, fields, fit=None, spectrum=None):
    """Run the same experiment at every field, tracking the qubit levels adiabatically.

    The bath realization, clusters and bath-state seeds are shared between fields.

    Args:
        system (SpinSystem): System template; its field is replaced.
        experiment (Experiment): Run parameters.
        fields (array-like): Fields in mT, strictly monotonic.
        fit (str): ``'raw'`` or ``'envelope'`` to fit a decay at each field.
        spectrum (dict): Keyword arguments of :func:`ramsey_spectrum` to compute a
            spectrum at each field.

    Returns:
        FieldSweepResult. Failures at a field are stored in ``errors`` and the
        sweep continues.
    """
    fields = np.asarray(fields, dtype=np.float64)
    if not np.all(np.isfinite(fields)):
        raise ValidationError('fields must be finite')
    clusters = enumerate_clusters(system, experiment.order, experiment.r_dip) if len(system.bath) else \
        ClusterSet({}, experiment.order, experiment.r_dip)
    curves, fits, spectra, levels, errors = [], [], [], [], {}
    prev = None
    for k, b in enumerate(fields):
        try:
            curve = simulate(system.with_field(b), experiment, prev, clusters)
            prev = curve.meta['levels']
        except GCCEError as e:
            log.warning('field %g mT failed: %s', b, e)
            errors[k] = f'{type(e).__name__}: {e}'
            curves.append(None)
            fits.append(None)
            spectra.append(None)
            levels.append(None)
            continue
        curves.append(curve)
        levels.append(prev)
        fits.append(fit_or_bound(curve, fit) if fit else None)
        spectra.append(ramsey_spectrum(curve, **spectrum) if spectrum is not None else None)
    return FieldSweepResult(fields, curves, fits if fit else None,
                            spectra if spectrum is not None else None, errors, levels)


@dataclass(frozen=True)
class HyperbolaModel:
    """Branch ``omega(B) = omega0 + sqrt(gyro^2 (B - b_min)^2 + E^2)`` (MHz, mT).

    ``offset = gyro * b_min`` is the hyperfine shift of the branch (MHz).
    """
    omega0: float
    E: float
    gyro: float
    b_min: float
    residual: float = 0.0
    errors: dict = field(default_factory=dict, compare=False)
    n_points: int = 0

    def __post_init__(self):
        if self.E < 0:
            raise ValidationError('E must be non-negative')

    @property
    def offset(self):
        return self.gyro * self.b_min

    def __call__(self, b):
        return hyperbola(np.asarray(b, dtype=np.float64), self.omega0, self.E, self.gyro, self.b_min)


def hyperbola(b, omega0, e, gyro, b_min):
    return omega0 + np.sqrt(gyro ** 2 * (b - b_min) ** 2 + e ** 2)


def fit_hyperbola(fields, freqs, gyro=None, p0=None):
    """Least-squares fit of one branch.

    Args:
        fields (array-like): Fields in mT.
        freqs (array-like): Branch frequencies in MHz.
        gyro (float): Fix the gyromagnetic ratio instead of fitting it.
        p0 (tuple): Initial ``(omega0, E, gyro, b_min)``.

    Returns:
        HyperbolaModel.
    """
    b = np.asarray(fields, dtype=np.float64)
    f = np.asarray(freqs, dtype=np.float64)
    n_free = 3 if gyro is not None else 4
    if len(b) < n_free:
        raise BranchResolutionError(f'{len(b)} points cannot determine {n_free} hyperbola parameters')
    if p0 is None:
        k = int(np.argmin(f))
        # asymptotic slope from the outermost points, E from the depth of the minimum
        span = max(abs(b[-1] - b[k]), abs(b[0] - b[k]), 1e-12)
        far = f[-1] if abs(b[-1] - b[k]) >= abs(b[0] - b[k]) else f[0]
        g0 = gyro if gyro is not None else max((far - f[k]) / span, 1e-6)
        e0 = max(abs(f[k]) * 0.1, 1e-3) if far == f[k] else max((far - f[k]) / 2, 1e-6)
        p0 = (f[k] - e0, e0, abs(g0), b[k])
    om0, e0, g0, bm0 = p0
    scale = max(np.ptp(f), 1e-9)
    # a minimum outside the sampled fields is not identifiable
    lo, hi = float(np.min(b)), float(np.max(b))
    bm0 = min(max(bm0, lo), hi)
    if gyro is None:
        fun = lambda p: (hyperbola(b, p[0], p[1], p[2], p[3]) - f) / scale  # noqa: E731
        x0 = [om0, abs(e0), abs(g0), bm0]
        lb, ub = [-np.inf, 0, 0, lo], [np.inf, np.inf, np.inf, hi]
    else:
        g = abs(gyro)
        fun = lambda p: (hyperbola(b, p[0], p[1], g, p[2]) - f) / scale  # noqa: E731
        x0 = [om0, abs(e0), bm0]
        lb, ub = [-np.inf, 0, lo], [np.inf, np.inf, hi]
    res = optimize.least_squares(fun, x0, bounds=(lb, ub), x_scale='jac', xtol=1e-15, ftol=1e-15,
                                 gtol=1e-15, max_nfev=20000)
    p = res.x
    try:
        jac = res.jac * scale
        cov = np.linalg.pinv(jac.T @ jac) * (2 * res.cost * scale ** 2 / max(len(b) - len(p), 1))
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(len(p), np.nan)
    names = ['omega0', 'E', 'gyro', 'b_min'] if gyro is None else ['omega0', 'E', 'b_min']
    errs = dict(zip(names, err.tolist()))
    if gyro is None:
        om, e, g, bm = p
    else:
        om, e, bm = p
        g = abs(gyro)
    resid = float(np.sqrt(np.mean((hyperbola(b, om, e, g, bm) - f) ** 2)))
    return HyperbolaModel(float(om), float(e), float(g), float(bm), resid, errs, len(b))


def sweep_peaks(sweep, factor=PEAK_FACTOR, max_peaks=None):
    """Peak frequencies at every field of a sweep with spectra."""
    if sweep.spectra is None:
        raise ValidationError('sweep has no spectra')
    out = []
    for spec in sweep.spectra:
        if spec is None:
            out.append(np.zeros(0))
        else:
            out.append(find_peaks(*spec, factor=factor, max_peaks=max_peaks)[0])
    return out


def _assign(peaks, models, tol):
    """Per field, a one-to-one matching of peaks to branches minimising the total distance.

    A peak feeds at most one branch; with fewer peaks than branches some branches get none.
    """
    pts = [[] for _ in models]
    for b, pk in peaks:
        if len(pk) == 0:
            continue
        pred = np.array([m(b) for m in models])
        cost = np.abs(pred[:, None] - pk[None, :])
        rows, cols = optimize.linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if cost[r, c] <= tol:
                pts[r].append((b, pk[c]))
    return pts


def fit_hyperbolae(sweep, branch_count, gyro=None, peaks=None, factor=PEAK_FACTOR, iterations=20):
    """Fit ``branch_count`` clock-transition hyperbolae to the peaks of a spectral sweep.

    Peaks are first picked at every field; each branch is seeded at a distinct
    local minimum of the lowest peak frequency vs field, then peak-to-branch
    assignment and branch fits are alternated until the assignment is stable.

    Args:
        sweep (FieldSweepResult): Sweep with spectra (at least 5 fields).
        branch_count (int): Number of branches.
        gyro (float): Fix the gyromagnetic ratio of every branch.
        peaks (list): Precomputed peak frequencies per field (overrides picking).

    Returns:
        list of HyperbolaModel sorted by ``b_min``.

    Raises:
        BranchResolutionError: Fewer resolvable peaks than ``branch_count``.
    """
    fields = sweep.fields
    if peaks is None:
        peaks = sweep_peaks(sweep, factor)
    pairs = [(b, np.sort(p)) for b, p in zip(fields, peaks) if len(p)]
    if len(pairs) < 5:
        raise BranchResolutionError(f'spectra resolved at only {len(pairs)} fields, need 5')
    most = max(len(p) for _, p in pairs)
    if most < branch_count:
        raise BranchResolutionError(f'at most {most} peaks resolved, {branch_count} branches requested')
    if branch_count == 1:
        # peaks are ordered by decreasing height: follow the strongest one
        b1 = np.array([b for b, p in zip(fields, peaks) if len(p)])
        f1 = np.array([p[0] for p in peaks if len(p)])
        return [fit_hyperbola(b1, f1, gyro)]
    bs = np.array([b for b, _ in pairs])
    low = np.array([p[0] for _, p in pairs])
    # seeds: local minima of the lower envelope, deepest first, then equally spaced fallbacks
    mins = sorted(signal.argrelmin(low)[0], key=lambda k: low[k])
    seeds = [bs[k] for k in mins][:branch_count]
    if len(seeds) < branch_count:
        extra = np.linspace(bs.min(), bs.max(), branch_count + 2)[1:-1]
        seeds += [x for x in extra if all(abs(x - s) > 1e-12 for s in seeds)][:branch_count - len(seeds)]
    seeds = sorted(seeds)
    g0 = abs(gyro) if gyro is not None else None
    allf = np.concatenate([p for _, p in pairs])
    spread = max(np.ptp(allf), 1e-9)
    # each branch starts from the lower envelope nearest to its seed
    base = fit_hyperbola(bs, low, gyro)
    owner = np.argmin(np.abs(bs[:, None] - np.array(seeds)[None, :]), axis=1)
    models = []
    for j, s in enumerate(seeds):
        near = owner == j
        try:
            m = fit_hyperbola(bs[near], low[near], gyro, p0=(base.omega0, base.E, base.gyro, s))
        except BranchResolutionError:
            m = HyperbolaModel(base.omega0, base.E, base.gyro, s)
        models.append(m)
    assignment = None
    for _ in range(iterations):
        pts = _assign(pairs, models, spread)
        key = [tuple((round(b, 12), round(f, 12)) for b, f in p) for p in pts]
        if key == assignment:
            break
        assignment = key
        new = []
        for m, p in zip(models, pts):
            if len(p) < (3 if g0 is not None else 4):
                new.append(m)
                continue
            pb, pf = np.array(p).T
            new.append(fit_hyperbola(pb, pf, gyro, p0=(m.omega0, m.E, m.gyro, m.b_min)))
        models = new
    return sorted(models, key=lambda m: m.b_min)


def branch_minima(a_iz, gyro):
    """Fields (mT) of the hyperbola minima for every sign combination of strong couplings.

    ``B = sum(+-A_iz) / (2 gyro)``, one entry per combination, sorted.
    """
    a = np.asarray(a_iz, dtype=np.float64)
    out = [np.dot(s, a) / (2 * abs(gyro)) for s in itertools.product((1, -1), repeat=len(a))]
    return np.sort(np.array(out))


def group_positions(values, resolution):
    """Group sorted values whose neighbours are closer than ``resolution``.

    Returns:
        list of lists of values.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    groups = []
    for x in v:
        if groups and x - groups[-1][-1] < resolution:
            groups[-1].append(float(x))
        else:
            groups.append([float(x)])
    return groups


def couplings_from_minima(models):
    """Coupling ``|gyro| * spacing`` (MHz) between adjacent branch minima."""
    if len(models) < 2:
        return np.zeros(0)
    bm = np.sort([m.b_min for m in models])
    g = np.mean([abs(m.gyro) for m in models])
    return g * np.diff(bm)


@dataclass
class GslacScan:
    """T2 and population fluctuations across fields near a level anticrossing."""
    fields: np.ndarray
    T2: np.ndarray
    lower_bound: np.ndarray
    population_deviation: np.ndarray
    flags: np.ndarray
    min_field: float
    degenerate_fields: list
    sweep: FieldSweepResult = None

    def flagged_window(self):
        """``(lo, hi)`` field range of flagged fields, or ``None``."""
        f = self.fields[self.flags]
        return (float(f.min()), float(f.max())) if len(f) else None

    def flags_contiguous(self):
        k = np.flatnonzero(self.flags)
        return len(k) == 0 or np.all(np.diff(k) == 1)


def population_deviation(curve, which='a'):
    """``max_t |rho_aa(t) / rho_aa(0) - 1|``."""
    pop = curve.pop_a if which == 'a' else curve.pop_b
    if pop is None:
        raise ValidationError('curve has no population trace')
    return float(np.nanmax(np.abs(pop / pop[0] - 1)))


def _level_degenerate(system, levels, tol=DEGENERACY_TOL):
    he = build_electron_hamiltonian(system.central, system.field)
    w = np.linalg.eigvalsh(he)
    for e in levels.energies:
        if np.sum(np.abs(w - e) < tol) > 1:
            return True
    return False


def gslac_scan(system, experiment, fields, band=0.02, fit_mode='raw'):
    """Hahn-echo T2 and population flags across a level anticrossing.

    Args:
        system (SpinSystem): Spin-1 central spin and bath; field is replaced.
        experiment (Experiment): Run parameters; populations are always computed.
        fields (array-like): Fields in mT.
        band (float): Flag a field when ``max |rho_aa(t)/rho_aa(0) - 1|`` exceeds this.

    Returns:
        GslacScan. T2 at fields where the echo does not decay within the window is
        the window length with ``lower_bound`` set.
    """
    if system.central.spin != 1:
        raise ValidationError('anticrossing scan expects a spin-1 central spin')
    experiment = replace(experiment, populations=True)
    sweep = field_sweep(system, experiment, fields, fit=fit_mode)
    n = len(sweep.fields)
    t2 = np.full(n, np.nan)
    lb = np.zeros(n, dtype=bool)
    dev = np.full(n, np.nan)
    degenerate = []
    for k in range(n):
        if k in sweep.errors and 'DegeneracyError' in sweep.errors[k]:
            degenerate.append(float(sweep.fields[k]))
        c = sweep.curves[k]
        if c is None:
            continue
        t2[k] = sweep.fits[k].T
        lb[k] = sweep.fits[k].lower_bound
        dev[k] = population_deviation(c)
        if _level_degenerate(system.with_field(sweep.fields[k]), c.meta['levels']):
            degenerate.append(float(sweep.fields[k]))
    flags = np.nan_to_num(dev, nan=0.0) > band
    kmin = int(np.nanargmin(t2)) if np.any(np.isfinite(t2)) else None
    min_field = float(sweep.fields[kmin]) if kmin is not None else np.nan
    return GslacScan(sweep.fields, t2, lb, dev, flags, min_field, sorted(set(degenerate)), sweep)


def local_minima(x, y):
    """Positions of interior local minima of ``y(x)`` (plateaus count once)."""
    y = np.asarray(y, dtype=np.float64)
    out = []
    for k in range(1, len(y) - 1):
        if y[k] < y[k - 1] and y[k] <= y[k + 1]:
            out.append(x[k])
    return out


def bath_coupling_descriptor(system):
    """Root-sum-square of the longitudinal couplings ``A_iz`` (MHz).

    ``A_iz = sqrt(A_xz^2 + A_yz^2 + A_zz^2)``.

    Returns:
        tuple: ``(descriptor, per-spin A_iz sorted in decreasing order)``.
    """
    if len(system.bath) == 0:
        return 0.0, np.zeros(0)
    a = system.hyperfines[:, :, 2]
    a_iz = np.sqrt(np.sum(a ** 2, axis=1))
    return float(np.sqrt(np.sum(a_iz ** 2))), np.sort(a_iz)[::-1]


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float
    slope_err: float


def loglog_fit(x, y):
    """Linear regression of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValidationError('log-log fit needs positive data')
    r = stats.linregress(np.log(x), np.log(y))
    return LogLogFit(float(r.slope), float(r.intercept), float(r.rvalue ** 2), float(r.stderr))


def quasi_static_coherence(system, levels, times, states):
    """Ramsey coherence of a qubit in a frozen Overhauser field.

    Every pure bath state shifts the central spin Hamiltonian by
    ``sum_i A_zz,i m_i Sz``; the qubit then precesses at the shifted level
    splitting. Averaging the phasors gives the static-noise limit of ``L(t)``.
    """
    he = build_electron_hamiltonian(system.central, system.field)
    sz = spin_operators(system.central.spin)[2]
    azz = system.hyperfines[:, 2, 2] if len(system.bath) else np.zeros(0)
    t = np.asarray(times, dtype=np.float64)
    acc = np.zeros(len(t), dtype=np.complex128)
    w0 = levels.splitting
    for s in states:
        h = he + float(azz @ s.projections) * sz
        lv = select_qubit_levels(h, LevelSelection('vector', tuple(levels.a), tuple(levels.b)))
        acc += s.weight * np.exp(-2j * np.pi * (lv.splitting - w0) * t)
    return CoherenceCurve(t, 0.5 * acc * np.exp(-2j * np.pi * w0 * t), meta=dict(method='quasi-static'))
