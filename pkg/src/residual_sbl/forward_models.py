"""Measurement operators, SNR-calibrated noise and data acquisition.

Signals are handled as flat real vectors. Images are n x n arrays flattened
in column-major (Fortran) order, so a 2D operator acting as ``A X B^T`` on
the image acts as ``kron(B, A)`` on the vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("identity", "blur", "subsample", "partial_fourier")

# Dense forms of 2D operators are only built on request, and only up to this many unknowns.
MAX_DENSE_2D = 64 * 64


def dft_matrix(n: int) -> np.ndarray:
    """Centred DFT matrix: row ``k + n/2`` holds ``exp(-1j*k*s_j)/n``, k = -n/2..n/2-1."""
    if n % 2:
        raise ValueError("DFT size must be even")
    s = -np.pi + 2 * np.pi * np.arange(n) / n
    k = np.arange(n) - n // 2
    return np.exp(-1j * np.outer(k, s)) / n


def _centered_dft(x: np.ndarray, axis: int) -> np.ndarray:
    n = x.shape[axis]
    k = np.arange(n) - n // 2
    sign = np.where(k % 2, -1.0, 1.0)
    coef = np.take(np.fft.fft(x, axis=axis), k % n, axis=axis) / n
    shape = [1] * x.ndim
    shape[axis] = n
    return coef * sign.reshape(shape)


def _centered_dft_adjoint(c: np.ndarray, axis: int) -> np.ndarray:
    n = c.shape[axis]
    k = np.arange(n) - n // 2
    sign = np.where(k % 2, -1.0, 1.0)
    shape = [1] * c.ndim
    shape[axis] = n
    z = np.zeros(c.shape, dtype=complex)
    idx = [slice(None)] * c.ndim
    idx[axis] = k % n
    z[tuple(idx)] = c * sign.reshape(shape)
    return np.fft.ifft(z, axis=axis)


def blur_matrix(n: int, gamma: float) -> np.ndarray:
    """Row-normalised periodic Gaussian kernel of width ``gamma`` radians.

    The Gaussian is wrapped around the circle (summed over its 2*pi shifts),
    which keeps the circulant positive definite even for wide kernels. For
    the narrow widths used in practice only the nearest image contributes.
    """
    if gamma <= 0:
        raise ValueError("psf width must be positive")
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(d, n - d) * (2 * np.pi / n)
    wraps = int(np.ceil(8 * gamma / (2 * np.pi)))
    kernel = sum(np.exp(-((d + 2 * np.pi * m) ** 2) / (2 * gamma**2)) for m in range(-wraps, wraps + 1))
    return kernel / kernel.sum(axis=1, keepdims=True)


def _random_mask(size: int, r: float, seed, keep: int | None = None) -> np.ndarray:
    """``round((1-r)*size)`` sorted distinct indices; ``keep`` is always included if given."""
    if not 0 <= r < 1:
        raise ValueError("undersampling ratio must lie in [0, 1)")
    m = int(round((1 - r) * size))
    if m == 0:
        raise ValueError(f"ratio {r} leaves no rows out of {size}")
    rng = np.random.default_rng(seed)
    if keep is None:
        return np.sort(rng.choice(size, m, replace=False))
    others = np.delete(np.arange(size), keep)
    return np.sort(np.append(rng.choice(others, m - 1, replace=False), keep))


@dataclass(eq=False)
class LinearForwardModel:
    """A linear measurement operator on a 1D signal or a square image.

    ``shape`` is ``(n,)`` or ``(n, n)``; ``cols`` is the number of unknowns and
    ``rows`` the number of (possibly complex) measurements.
    """

    kind: str
    shape: tuple
    mask: np.ndarray | None = None
    psf_gamma: float | None = None
    seed: int | None = None
    _kernel: np.ndarray | None = field(default=None, repr=False)
    _dense: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forward model {self.kind!r}")
        if len(self.shape) not in (1, 2) or (len(self.shape) == 2 and self.shape[0] != self.shape[1]):
            raise ValueError(f"unsupported grid shape {self.shape}")

    @property
    def n(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return int(np.prod(self.shape))

    @property
    def rows(self) -> int:
        return self.cols if self.mask is None else len(self.mask)

    m = rows

    @property
    def is_complex(self) -> bool:
        return self.kind == "partial_fourier"

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def _as_grid(self, x):
        return x.reshape(self.shape, order="F")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.cols,):
            raise ValueError(f"expected vector of length {self.cols}, got {x.shape}")
        if self.kind == "identity":
            return x.copy()
        if self.kind == "subsample":
            return x[self.mask]
        g = self._as_grid(x)
        if self.kind == "blur":
            B = self._kernel
            out = B @ g if self.ndim == 1 else B @ g @ B.T
            return out.ravel(order="F")
        out = g
        for axis in range(self.ndim):
            out = _centered_dft(out, axis)
        out = out.ravel(order="F")
        return out if self.mask is None else out[self.mask]

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (self.rows,):
            raise ValueError(f"expected vector of length {self.rows}, got {y.shape}")
        if self.kind == "identity":
            return y.copy()
        if self.kind == "subsample":
            out = np.zeros(self.cols, dtype=y.dtype)
            out[self.mask] = y
            return out
        if self.kind == "blur":
            B = self._kernel
            g = self._as_grid(y)
            out = B.T @ g if self.ndim == 1 else B.T @ g @ B
            return out.ravel(order="F")
        full = np.zeros(self.cols, dtype=complex)
        if self.mask is None:
            full[:] = y
        else:
            full[self.mask] = y
        out = self._as_grid(full)
        for axis in range(self.ndim):
            out = _centered_dft_adjoint(out, axis)
        return out.ravel(order="F")

    def normal(self, x: np.ndarray) -> np.ndarray:
        """Real part of ``F^H F x`` (the real-stacked normal operator)."""
        return np.real(self.adjoint(self.apply(x)))

    def normal_diagonal(self) -> np.ndarray:
        """Diagonal of ``Re(F^H F)`` without forming the matrix."""
        if self.kind == "identity":
            return np.ones(self.cols)
        if self.kind == "subsample":
            d = np.zeros(self.cols)
            d[self.mask] = 1.0
            return d
        if self.kind == "blur":
            col = (self._kernel**2).sum(axis=0)
            return col if self.ndim == 1 else np.outer(col, col).ravel(order="F")
        return np.full(self.cols, self.rows / float(self.cols) ** 2)

    @property
    def matrix(self) -> np.ndarray:
        """Dense ``rows x cols`` matrix (complex for partial Fourier)."""
        if self._dense is None:
            if self.ndim == 2 and self.cols > MAX_DENSE_2D:
                raise ValueError(f"dense form refused for {self.cols} unknowns")
            self._dense = self._build_dense()
        return self._dense

    def _build_dense(self):
        n = self.n
        if self.kind == "identity":
            return np.eye(self.cols)
        if self.kind == "subsample":
            return np.eye(self.cols)[self.mask]
        if self.kind == "blur":
            B = self._kernel
            return B.copy() if self.ndim == 1 else np.kron(B, B)
        F = dft_matrix(n)
        full = F if self.ndim == 1 else np.kron(F, F)
        return full if self.mask is None else full[self.mask]

    def real_stacked(self) -> np.ndarray:
        """Real matrix with the same normal operator: ``[Re F; Im F]`` when complex."""
        A = self.matrix
        return np.vstack([A.real, A.imag]) if np.iscomplexobj(A) else A


def _shape(n: int, ndim: int) -> tuple:
    if ndim not in (1, 2):
        raise ValueError("only 1D signals and 2D images are supported")
    return (n,) * ndim


def identity_model(n: int, ndim: int = 1) -> LinearForwardModel:
    return LinearForwardModel("identity", _shape(n, ndim))


def blur_model(n: int, gamma: float, ndim: int = 1) -> LinearForwardModel:
    """Circulant Gaussian blur; in 2D the separable kernel is applied along both axes."""
    return LinearForwardModel("blur", _shape(n, ndim), psf_gamma=gamma, _kernel=blur_matrix(n, gamma))


def subsample_model(n: int, r: float, seed: int, ndim: int = 1) -> LinearForwardModel:
    shape = _shape(n, ndim)
    mask = _random_mask(int(np.prod(shape)), r, seed)
    return LinearForwardModel("subsample", shape, mask=mask, seed=seed)


def partial_fourier_model(n: int, r: float, seed: int, ndim: int = 1, keep_dc: bool = False) -> LinearForwardModel:
    """Randomly retained rows of the centred DFT.

    With ``keep_dc`` the zero-frequency row is always retained and the other
    rows are drawn among the rest; without it a mask may miss the mean, in
    which case constant signals are invisible to the data.
    """
    if n % 2:
        raise ValueError("partial Fourier data needs an even grid size")
    shape = _shape(n, ndim)
    dc = n // 2 if ndim == 1 else n // 2 + n * (n // 2)
    mask = _random_mask(int(np.prod(shape)), r, seed, keep=dc if keep_dc else None)
    return LinearForwardModel("partial_fourier", shape, mask=mask, seed=seed)


def make_model(kind: str, n: int, ndim: int = 1, *, gamma=None, r=None, seed=None, keep_dc=False) -> LinearForwardModel:
    if kind == "identity":
        return identity_model(n, ndim)
    if kind == "blur":
        return blur_model(n, gamma, ndim)
    if kind == "subsample":
        return subsample_model(n, r, seed, ndim)
    if kind == "partial_fourier":
        return partial_fourier_model(n, r, seed, ndim, keep_dc)
    raise ValueError(f"unknown forward model {kind!r}")


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    model: LinearForwardModel
    alpha: float
    snr_db: float = np.inf

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("noise precision must be positive")
        if self.y.shape != (self.model.rows,):
            raise ValueError("data length does not match the forward model")


@dataclass(frozen=True)
class MeasurementSet:
    measurements: tuple

    def __post_init__(self):
        cols = {m.model.cols for m in self.measurements}
        if len(cols) > 1:
            raise ValueError("all measurements must share the number of unknowns")

    def __len__(self):
        return len(self.measurements)

    def __iter__(self):
        return iter(self.measurements)

    def __getitem__(self, i):
        return self.measurements[i]


def alpha_from_snr(signal, snr_db: float) -> float:
    """Noise precision giving ``10 log10(alpha |f|^2 / len(f)) = snr_db``."""
    f = np.asarray(getattr(signal, "values", signal))
    energy = float(np.sum(np.abs(f) ** 2))
    if energy == 0:
        raise ValueError("cannot calibrate noise against a zero signal")
    return f.size * 10 ** (snr_db / 10) / energy


def snr_from_alpha(signal, alpha: float) -> float:
    f = np.asarray(getattr(signal, "values", signal))
    return 10 * np.log10(alpha * np.sum(np.abs(f) ** 2) / f.size)


def acquire(signal, model: LinearForwardModel, snr_db: float, seed: int) -> Measurement:
    """Simulate ``y = F f + noise`` at the requested SNR.

    The noise precision is calibrated against the signal itself, except for
    partial Fourier data where it is calibrated against the clean Fourier
    coefficients (the 1/n-normalised DFT shrinks their energy by the grid
    size). Complex noise puts variance ``1/(2 alpha)`` on each of the real and
    imaginary parts. ``snr_db = inf`` returns noiseless data with alpha = 1.
    """
    f = np.asarray(getattr(signal, "values", signal), dtype=float).ravel(order="F")
    if f.size != model.cols:
        raise ValueError(f"signal has {f.size} entries, model expects {model.cols}")
    clean = model.apply(f)
    if np.isinf(snr_db):
        return Measurement(clean, model, 1.0, snr_db)
    reference = clean if model.is_complex else f
    alpha = alpha_from_snr(reference, snr_db)
    rng = np.random.default_rng(seed)
    if model.is_complex:
        noise = (rng.standard_normal(clean.size) + 1j * rng.standard_normal(clean.size)) / np.sqrt(2 * alpha)
    else:
        noise = rng.standard_normal(clean.size) / np.sqrt(alpha)
    return Measurement(clean + noise, model, alpha, snr_db)
