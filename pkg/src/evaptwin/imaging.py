"""Synthetic absorption images and the mask-sweep bimodal fit.

Forward model (in-trap geometry, no time of flight): optical depth is the
column density times the absorption cross-section,

    OD = A_th exp(-x^2/2s_x^2 - y^2/2s_y^2) + A_tf max(0, 1 - x^2/R_x^2 - y^2/R_y^2)^(3/2)

with s_i = sqrt(k_B T / m w_i^2) and Thomas-Fermi radii R_i = sqrt(2 mu / m w_i^2).
Atom numbers follow from the integrals 2 pi s_x s_y A_th and (2 pi / 5) R_x R_y A_tf
times pixel_area / sigma_abs.

Fit: an elliptical mask of semi-axes s * (sigma_x, sigma_y) of a preliminary
unmasked Gaussian fit hides the centre; the Gaussian width of the remaining
wings is followed as s grows, and the smallest s beyond which it stops
changing fixes the thermal fit. That fit is subtracted pixel by pixel and the
remainder is fitted with the Thomas-Fermi profile.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .cloud import CloudState
from .constants import BOHR_RADIUS, HBAR, KB, TM_MASS, UK, UM
from .trap_model import TrapState

TF_INTEGRAL = 2.0 * math.pi / 5.0
N_THERMAL_PARAMS = 6
N_TF_PARAMS = 5
MIN_PIXELS_PER_PARAM = 6

# resonant cross-section 3 lambda^2 / 2 pi at 410.6 nm, µm^2
SIGMA_ABS_410 = 3.0 * 0.4106**2 / (2.0 * math.pi)

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class ImagingError(Exception):
    pass


class GeometryError(ImagingError):
    """Image grid too small for the cloud."""


class FitError(ImagingError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class PlateauError(ImagingError):
    """The Gaussian width never settles as the mask grows."""

    def __init__(self, message, sweep=None):
        super().__init__(message)
        self.sweep = sweep or []


@dataclass
class AbsorptionImage:
    grid: np.ndarray  # optical depth, shape (ny, nx)
    pixel_size: float = 1.0  # µm
    absorption_cross_section: float = SIGMA_ABS_410  # µm^2

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 2:
            raise ValueError("image grid must be 2D")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("image contains non-finite values")
        if self.pixel_size <= 0 or self.absorption_cross_section <= 0:
            raise ValueError("pixel size and cross-section must be positive")

    @property
    def pixel_to_atoms(self) -> float:
        return self.pixel_size**2 / self.absorption_cross_section

    @property
    def shape(self):
        return self.grid.shape


@dataclass(frozen=True)
class ImagingParams:
    shape: tuple[int, int] = (128, 128)  # (ny, nx)
    pixel_size: float = 1.0  # µm
    absorption_cross_section: float = SIGMA_ABS_410
    axes: tuple[str, str] = ("x", "z")  # trap axes along image columns, rows
    center: tuple[float, float] | None = None  # (cx, cy) px, default image centre


@dataclass(frozen=True)
class CloudTruth:
    """Image-space description of a bimodal cloud; lengths in pixels."""

    n_thermal: float
    sigma_x: float
    sigma_y: float
    n_bec: float = 0.0
    r_x: float = 1.0
    r_y: float = 1.0
    center: tuple[float, float] = (63.5, 63.5)

    def thermal_amplitude(self, pixel_to_atoms: float) -> float:
        return self.n_thermal / (2.0 * math.pi * self.sigma_x * self.sigma_y * pixel_to_atoms)

    def tf_amplitude(self, pixel_to_atoms: float) -> float:
        if self.n_bec <= 0:
            return 0.0
        return self.n_bec / (TF_INTEGRAL * self.r_x * self.r_y * pixel_to_atoms)


@dataclass(frozen=True)
class MaskSpec:
    center: tuple[float, float]
    size_s: float
    sigma_x: float
    aspect: float = 1.0  # semi-axis y / semi-axis x
    shape: str = "ellipse"

    def __post_init__(self):
        if self.size_s < 0:
            raise ValueError("mask size must be non-negative")
        if self.aspect <= 0:
            raise ValueError("mask aspect must be positive")

    def covered(self, xx, yy) -> np.ndarray:
        if self.size_s == 0:
            return np.zeros(np.shape(xx), dtype=bool)
        ax = self.size_s * self.sigma_x
        ay = ax * self.aspect
        return ((xx - self.center[0]) / ax) ** 2 + ((yy - self.center[1]) / ay) ** 2 <= 1.0


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    x0: float
    y0: float
    sigma_x: float
    sigma_y: float
    offset: float
    residual_norm: float = 0.0
    n_pixels: int = 0
    sigma_x_stderr: float = 0.0

    @property
    def params(self):
        return np.array([self.amplitude, self.x0, self.y0, self.sigma_x, self.sigma_y, self.offset])


@dataclass(frozen=True)
class TFFit:
    amplitude: float
    x0: float
    y0: float
    r_x: float
    r_y: float


@dataclass
class BimodalFitResult:
    thermal: GaussianFit
    tf: TFFit | None
    n_thermal: float
    n_bec: float
    chosen_s: float
    s_sweep: list  # (s, sigma_x)
    preliminary: GaussianFit
    detection_floor: float = 0.0

    @property
    def detected(self) -> bool:
        return self.n_bec >= self.detection_floor and self.n_bec > 0

    def record(self) -> dict:
        return {
            "n_thermal": self.n_thermal,
            "n_bec": self.n_bec,
            "chosen_s": self.chosen_s,
            "detection_floor": self.detection_floor,
            "thermal": {k: getattr(self.thermal, k) for k in ("amplitude", "x0", "y0", "sigma_x", "sigma_y", "offset")},
            "tf": None if self.tf is None else {k: getattr(self.tf, k) for k in ("amplitude", "x0", "y0", "r_x", "r_y")},
        }


@dataclass(frozen=True)
class BimodalConfig:
    s_grid: tuple[float, ...] = tuple(np.round(np.arange(0.0, 3.0 + 1e-9, 0.25), 10))
    tol_rel: float = 0.01
    stderr_multiple: float = 3.0
    margin_steps: int = 1
    max_nfev: int = 2000
    floor_sigmas: float = 5.0
    # width_sys is the shift of the subtracted signal under the condensate for a
    # tol_rel change of both thermal widths; the multiple was calibrated on
    # randomized closed-loop images (SNR 20-100) to keep recovery within 5%
    systematic_multiple: float = 60.0
    floor_fraction: float = 0.01


# --------------------------------------------------------------------- models


def _grid(shape):
    ny, nx = shape
    yy, xx = np.mgrid[0:ny, 0:nx].astype(float)
    return xx, yy


def gaussian_model(p, xx, yy):
    a, x0, y0, sx, sy, c = p
    return a * np.exp(-0.5 * ((xx - x0) / sx) ** 2 - 0.5 * ((yy - y0) / sy) ** 2) + c


def gaussian_jacobian(p, xx, yy):
    a, x0, y0, sx, sy, _ = p
    dx, dy = xx - x0, yy - y0
    g = np.exp(-0.5 * (dx / sx) ** 2 - 0.5 * (dy / sy) ** 2)
    ag = a * g
    return np.stack([g, ag * dx / sx**2, ag * dy / sy**2, ag * dx**2 / sx**3, ag * dy**2 / sy**3, np.ones_like(g)], -1)


def tf_model(p, xx, yy):
    a, x0, y0, rx, ry = p
    q = np.maximum(1.0 - ((xx - x0) / rx) ** 2 - ((yy - y0) / ry) ** 2, 0.0)
    return a * q**1.5


def tf_jacobian(p, xx, yy):
    a, x0, y0, rx, ry = p
    dx, dy = xx - x0, yy - y0
    q = np.maximum(1.0 - (dx / rx) ** 2 - (dy / ry) ** 2, 0.0)
    sq = np.sqrt(q)
    k = 1.5 * a * sq * 2.0
    return np.stack([q**1.5, k * dx / rx**2, k * dy / ry**2, k * dx**2 / rx**3, k * dy**2 / ry**3], -1)


# ------------------------------------------------------------------ synthesis


def render(truth: CloudTruth, shape, pixel_to_atoms: float) -> np.ndarray:
    xx, yy = _grid(shape)
    cx, cy = truth.center
    th = gaussian_model([truth.thermal_amplitude(pixel_to_atoms), cx, cy, truth.sigma_x, truth.sigma_y, 0.0], xx, yy)
    if truth.n_bec > 0:
        th = th + tf_model([truth.tf_amplitude(pixel_to_atoms), cx, cy, truth.r_x, truth.r_y], xx, yy)
    return th


def check_geometry(truth: CloudTruth, shape):
    ny, nx = shape
    cx, cy = truth.center
    half_x = min(cx, nx - 1 - cx)
    half_y = min(cy, ny - 1 - cy)
    ext_x = max(4.0 * truth.sigma_x if truth.n_thermal > 0 else 0.0, truth.r_x if truth.n_bec > 0 else 0.0)
    ext_y = max(4.0 * truth.sigma_y if truth.n_thermal > 0 else 0.0, truth.r_y if truth.n_bec > 0 else 0.0)
    if ext_x > half_x or ext_y > half_y:
        raise GeometryError(f"cloud extent ({ext_x:.1f}, {ext_y:.1f}) px exceeds grid half-size ({half_x:.1f}, {half_y:.1f})")


def synthesize_truth(truth: CloudTruth, params: ImagingParams = ImagingParams(), noise_sigma: float = 0.0, seed=None) -> AbsorptionImage:
    check_geometry(truth, params.shape)
    px2at = params.pixel_size**2 / params.absorption_cross_section
    od = render(truth, params.shape, px2at)
    if noise_sigma > 0:
        od = od + np.random.default_rng(seed).normal(0.0, noise_sigma, size=od.shape)
    return AbsorptionImage(od, params.pixel_size, params.absorption_cross_section)


def truth_from_cloud(cloud: CloudState, trap: TrapState, params: ImagingParams = ImagingParams(), a_bohr: float = 144.0, mass: float = TM_MASS) -> CloudTruth:
    """Map a trapped cloud onto image-plane widths (pixels)."""
    ix, iy = AXIS_INDEX[params.axes[0]], AXIS_INDEX[params.axes[1]]
    w = trap.omegas
    kt = KB * max(cloud.temperature, 1e-12) * UK
    sig = [math.sqrt(kt / (mass * w[i] ** 2)) / UM / params.pixel_size for i in (ix, iy)]
    radii = [1.0, 1.0]
    if cloud.n_bec > 0:
        a = abs(a_bohr) * BOHR_RADIUS
        a_ho = math.sqrt(HBAR / (mass * trap.omega_bar))
        mu = 0.5 * HBAR * trap.omega_bar * (15.0 * cloud.n_bec * a / a_ho) ** 0.4
        radii = [math.sqrt(2.0 * mu / (mass * w[i] ** 2)) / UM / params.pixel_size for i in (ix, iy)]
    ny, nx = params.shape
    center = params.center or ((nx - 1) / 2.0, (ny - 1) / 2.0)
    return CloudTruth(cloud.n_thermal, sig[0], sig[1], cloud.n_bec, radii[0], radii[1], center)


def synthesize(cloud: CloudState, trap: TrapState, params: ImagingParams = ImagingParams(), noise_sigma: float = 0.0, seed=None, a_bohr: float = 144.0, mass: float = TM_MASS) -> AbsorptionImage:
    return synthesize_truth(truth_from_cloud(cloud, trap, params, a_bohr, mass), params, noise_sigma, seed)


def auto_params(cloud: CloudState, trap: TrapState, shape=(128, 128), axes=("x", "z"), mass: float = TM_MASS, span: float = 10.0) -> ImagingParams:
    """Pick a pixel size so that +-span/2 thermal widths fill the grid."""
    w = trap.omegas
    kt = KB * max(cloud.temperature, 1e-12) * UK
    s = max(math.sqrt(kt / (mass * w[AXIS_INDEX[a]] ** 2)) / UM for a in axes)
    return ImagingParams(shape, span * s / min(shape), axes=axes)


# ------------------------------------------------------------------- fitting


def _moments(image: np.ndarray, xx, yy, weights=None):
    w = np.clip(image, 0.0, None) if weights is None else weights
    total = w.sum()
    if total <= 0:
        ny, nx = image.shape
        return (nx - 1) / 2.0, (ny - 1) / 2.0, nx / 6.0, ny / 6.0
    cx = (w * xx).sum() / total
    cy = (w * yy).sum() / total
    sx = math.sqrt(max((w * (xx - cx) ** 2).sum() / total, 1.0))
    sy = math.sqrt(max((w * (yy - cy) ** 2).sum() / total, 1.0))
    return cx, cy, sx, sy


def _frame(image: AbsorptionImage):
    """Pixel coordinates relative to the rounded centroid, so integer shifts are exact."""
    xx, yy = _grid(image.shape)
    cx, cy, _, _ = _moments(image.grid, xx, yy)
    ox, oy = round(cx), round(cy)
    return xx - ox, yy - oy, (ox, oy)


def _initial_gaussian(data, xx, yy, keep):
    img = np.where(keep, data, 0.0)
    edge = np.median(data[keep]) if keep.any() else 0.0
    cx, cy, sx, sy = _moments(img - min(edge, 0.0), xx, yy)
    peak = float(np.max(np.where(keep, data, -np.inf)))
    return np.array([max(peak - edge, 1e-12), cx, cy, sx, sy, 0.0])


def _fit_gaussian(data, xx, yy, keep, p0, max_nfev):
    d, x, y = data[keep], xx[keep], yy[keep]

    def resid(p):
        return gaussian_model(p, x, y) - d

    def jac(p):
        return gaussian_jacobian(p, x, y)

    res = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-8, ftol=1e-10, max_nfev=max_nfev, x_scale="jac")
    if res.status <= 0:
        raise FitError(f"Gaussian fit did not converge: {res.message}", last=res.x)
    p = res.x.copy()
    p[3], p[4] = abs(p[3]), abs(p[4])
    m = int(keep.sum())
    rss = float(np.sum(res.fun**2))
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * rss / max(m - N_THERMAL_PARAMS, 1)
        se = float(math.sqrt(max(cov[3, 3], 0.0)))
    except np.linalg.LinAlgError:
        se = math.inf
    return p, math.sqrt(rss), m, se


def fit_thermal_masked(image: AbsorptionImage, mask: MaskSpec, p0=None, max_nfev: int = 2000) -> GaussianFit:
    """Least-squares 2D Gaussian + offset on the pixels outside ``mask`` (absolute pixel coordinates)."""
    xx, yy = _grid(image.shape)
    keep = ~mask.covered(xx, yy)
    if keep.sum() < MIN_PIXELS_PER_PARAM * N_THERMAL_PARAMS:
        raise ValueError(f"only {int(keep.sum())} unmasked pixels; need {MIN_PIXELS_PER_PARAM * N_THERMAL_PARAMS}")
    p0 = _initial_gaussian(image.grid, xx, yy, keep) if p0 is None else np.asarray(p0, float)
    p, rn, n, se = _fit_gaussian(image.grid, xx, yy, keep, p0, max_nfev)
    return GaussianFit(*p, residual_norm=rn, n_pixels=n, sigma_x_stderr=se)


def _shift(fit: GaussianFit, origin) -> GaussianFit:
    return GaussianFit(fit.amplitude, fit.x0 + origin[0], fit.y0 + origin[1], fit.sigma_x, fit.sigma_y, fit.offset, fit.residual_norm, fit.n_pixels, fit.sigma_x_stderr)


def _sweep(image: AbsorptionImage, s_grid, config: BimodalConfig):
    xx, yy, origin = _frame(image)
    data = image.grid
    everything = np.ones(data.shape, dtype=bool)
    p = _initial_gaussian(data, xx, yy, everything)
    p, rn, n, se = _fit_gaussian(data, xx, yy, everything, p, config.max_nfev)
    prelim = GaussianFit(*p, residual_norm=rn, n_pixels=n, sigma_x_stderr=se)
    aspect = prelim.sigma_y / prelim.sigma_x
    fits = []
    for s in s_grid:
        mask = MaskSpec((prelim.x0, prelim.y0), float(s), prelim.sigma_x, aspect)
        keep = ~mask.covered(xx, yy)
        if keep.sum() < MIN_PIXELS_PER_PARAM * N_THERMAL_PARAMS:
            break
        prev = fits[-1][1] if fits else prelim
        p, rn, n, se = _fit_gaussian(data, xx, yy, keep, prev.params, config.max_nfev)
        if p[0] <= 0:
            # the wings carry no thermal signal (e.g. a pure condensate fully
            # masked); the width is then undefined, so the previous one is kept
            p = np.array([0.0, prev.x0, prev.y0, prev.sigma_x, prev.sigma_y, float(np.mean(data[keep]))])
            se = 0.0
        fits.append((float(s), GaussianFit(*p, residual_norm=rn, n_pixels=n, sigma_x_stderr=se)))
    return prelim, fits, origin


def _plateau_index(fits, tol_rel, stderr_multiple, margin):
    """Index into ``fits`` of the chosen mask size, or None without a plateau.

    The plateau starts at the smallest j for which every later width agrees
    with sigma_x(j) to ``tol_rel``, or to ``stderr_multiple`` standard errors of
    the later fit when noisy wings cannot resolve a 1% change.
    """
    def settled(j):
        ref = fits[j].sigma_x
        return all(
            abs(f.sigma_x - ref) < max(tol_rel * ref, stderr_multiple * f.sigma_x_stderr)
            for f in fits[j + 1:]
        )

    for j in range(len(fits) - 1):
        if settled(j):
            return 0 if j == 0 else min(j + margin, len(fits) - 1)
    return None


def select_mask_size(image: AbsorptionImage, s_grid=None, tol_rel: float | None = None, config: BimodalConfig = BimodalConfig()):
    """Return (chosen_s, sweep) where sweep lists (s, sigma_x) over the mask sizes tried.

    chosen_s is the smallest s after which every consecutive relative change of
    sigma_x stays below ``tol_rel``; when sigma_x did change, one extra grid step
    (``margin_steps``) guarantees the mask also hides the condensate edge.
    """
    s_grid = config.s_grid if s_grid is None else tuple(s_grid)
    tol = config.tol_rel if tol_rel is None else tol_rel
    if len(s_grid) < 3 or any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be increasing with at least 3 points")
    _, fits, _ = _sweep(image, s_grid, config)
    sweep = [(s, f.sigma_x) for s, f in fits]
    idx = _plateau_index([f for _, f in fits], tol, config.stderr_multiple, config.margin_steps) if len(fits) >= 2 else None
    if idx is None:
        raise PlateauError("sigma_x does not settle over the mask sweep", sweep)
    return fits[idx][0], sweep


def _fit_tf(residual, xx, yy, p0, max_nfev):
    def resid(p):
        return tf_model(p, xx, yy).ravel() - residual.ravel()

    def jac(p):
        return tf_jacobian(p, xx, yy).reshape(-1, N_TF_PARAMS)

    res = least_squares(resid, p0, jac=jac, method="trf", xtol=1e-10, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev, x_scale="jac")
    p = res.x.copy()
    p[3], p[4] = abs(p[3]), abs(p[4])
    return p


def _subtraction_uncertainty(data, xx, yy, fit: GaussianFit, keep, inside) -> float:
    """Standard error (OD * pixels) of the thermal model summed over ``inside``.

    Propagates the least-squares covariance of the masked Gaussian fit; this is
    the part of the residual under the condensate that the thermal fit cannot pin down.
    """
    p = fit.params
    J = gaussian_jacobian(p, xx[keep], yy[keep])
    r = gaussian_model(p, xx[keep], yy[keep]) - data[keep]
    dof = max(int(keep.sum()) - N_THERMAL_PARAMS, 1)
    try:
        cov = np.linalg.inv(J.T @ J) * float(r @ r) / dof
    except np.linalg.LinAlgError:
        return math.inf
    g = gaussian_jacobian(p, xx[inside], yy[inside]).sum(0)
    return float(math.sqrt(max(g @ cov @ g, 0.0)))


def _noise_estimate(residual, inside):
    out = residual[~inside]
    if out.size < 10:
        return 0.0
    return float(1.4826 * np.median(np.abs(out - np.median(out))))


def fit_bimodal(image: AbsorptionImage, config: BimodalConfig = BimodalConfig()) -> BimodalFitResult:
    xx, yy, origin = _frame(image)
    prelim, fits, _ = _sweep(image, config.s_grid, config)
    sweep = [(s, f.sigma_x) for s, f in fits]
    idx = _plateau_index([f for _, f in fits], config.tol_rel, config.stderr_multiple, config.margin_steps) if len(fits) >= 2 else None
    if idx is None:
        raise PlateauError("sigma_x does not settle over the mask sweep", sweep)
    chosen_s, thermal = fits[idx]
    model = gaussian_model(thermal.params, xx, yy)
    residual = image.grid - model
    px2at = image.pixel_to_atoms

    ax = max(chosen_s, 0.5) * prelim.sigma_x
    ay = ax * prelim.sigma_y / prelim.sigma_x
    inside = ((xx - thermal.x0) / ax) ** 2 + ((yy - thermal.y0) / ay) ** 2 <= 1.0
    noise = _noise_estimate(residual, inside)

    tf = None
    n_bec = 0.0
    peak = float(np.max(residual[inside])) if inside.any() else 0.0
    if peak > 0:
        p0 = np.array([peak, thermal.x0, thermal.y0, 0.8 * ax, 0.8 * ay])
        p = _fit_tf(residual, xx, yy, p0, config.max_nfev)
        if p[0] > 0:
            tf = TFFit(p[0], p[1] + origin[0], p[2] + origin[1], p[3], p[4])
            n_bec = TF_INTEGRAL * p[3] * p[4] * p[0] * px2at
    n_thermal = 2.0 * math.pi * thermal.sigma_x * thermal.sigma_y * thermal.amplitude * px2at
    keep = ~MaskSpec((prelim.x0, prelim.y0), chosen_s, prelim.sigma_x, prelim.sigma_y / prelim.sigma_x).covered(xx, yy)
    sub = _subtraction_uncertainty(image.grid, xx, yy, thermal, keep, inside)
    pixel_noise = noise * math.sqrt(max(int(inside.sum()), 1))
    g = gaussian_jacobian(thermal.params, xx[inside], yy[inside]).sum(0)
    width_sys = config.tol_rel * (abs(g[3]) * thermal.sigma_x + abs(g[4]) * thermal.sigma_y)
    floor = px2at * max(config.floor_sigmas * math.hypot(sub, pixel_noise), config.systematic_multiple * width_sys)
    floor = max(floor, config.floor_fraction * n_thermal)
    return BimodalFitResult(
        thermal=_shift(thermal, origin),
        tf=tf,
        n_thermal=n_thermal,
        n_bec=n_bec,
        chosen_s=chosen_s,
        s_sweep=sweep,
        preliminary=_shift(prelim, origin),
        detection_floor=floor,
    )


def subtraction_parts(image: AbsorptionImage, fit: GaussianFit):
    """(model, residual) of the pointwise thermal subtraction, absolute coordinates."""
    xx, yy = _grid(image.shape)
    model = gaussian_model(fit.params, xx, yy)
    return model, image.grid - model


# ------------------------------------------------------------------- file I/O

_MAGIC = b"EVTI"
_HEADER = struct.Struct("<4sIIIdd")


def write_image(image: AbsorptionImage, path, binary: bool | None = None):
    path = str(path)
    binary = path.endswith(".bin") if binary is None else binary
    ny, nx = image.shape
    if binary:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, 1, ny, nx, image.pixel_size, image.absorption_cross_section))
            fh.write(image.grid.astype("<f8").tobytes())
        return
    with open(path, "w") as fh:
        fh.write("# evaptwin-image v1\n")
        fh.write(f"# shape {ny} {nx}\n")
        fh.write(f"# pixel_size_um {image.pixel_size!r}\n")
        fh.write(f"# sigma_abs_um2 {image.absorption_cross_section!r}\n")
        for row in image.grid:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_image(path) -> AbsorptionImage:
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _MAGIC:
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, ny, nx, px, sig = _HEADER.unpack_from(raw)
        if version != 1:
            raise ValueError(f"unsupported image version {version}")
        data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=ny * nx).reshape(ny, nx)
        return AbsorptionImage(data.copy(), px, sig)
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2:
                    meta[parts[0]] = parts[1:]
                continue
            if line.strip():
                rows.append([float(v) for v in line.split()])
    grid = np.array(rows)
    if "shape" in meta and tuple(int(v) for v in meta["shape"]) != grid.shape:
        raise ValueError("image header shape does not match data")
    return AbsorptionImage(grid, float(meta.get("pixel_size_um", [1.0])[0]), float(meta.get("sigma_abs_um2", [SIGMA_ABS_410])[0]))


def write_sweep_csv(sweep, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "sigma_x_px"])
        for s, sx in sweep:
            w.writerow([repr(float(s)), repr(float(sx))])
