"""Fractional Brownian motion: covariance, path containers and samplers.

Three samplers share the counter-based seeding of :mod:`skewflow.rng`:

* ``sample_fbm_cholesky``: exact, dense factorization of the covariance on the grid.
* ``sample_fbm_circulant``: exact (Davies-Harte) embedding of fractional Gaussian noise.
* ``sample_fbm_volterra``: transfer of explicit Wiener paths through the kernel K_H.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from . import rng
from .errors import DomainError, FactorizationError, GridMismatchError

CHOLESKY_MAX_STEPS = 4096
CIRCULANT_MAX_EMBEDDING = 1 << 24


@dataclass(frozen=True)
class HurstParam:
    h: float

    def __post_init__(self):
        h = float(self.h)
        if not 0.0 < h < 1.0:
            raise DomainError(f"Hurst parameter must lie in (0, 1), got {h}")
        object.__setattr__(self, "h", h)

    @property
    def strict_low(self) -> bool:
        """True for ``h < 1/2``, the regime of the kernel and Girsanov machinery."""
        return self.h < 0.5

    def __float__(self) -> float:
        return self.h


def as_hurst(h) -> HurstParam:
    return h if isinstance(h, HurstParam) else HurstParam(h)


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise DomainError(f"t_end must be positive, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt


class PathKind(str, enum.Enum):
    WIENER = "wiener"
    FBM = "fbm"
    SOLUTION = "solution"


@dataclass
class PathBatch:
    """``count`` paths of a ``dim``-dimensional process on ``grid``.

    ``data`` has shape ``(count, n_steps + 1, dim)``.  ``start`` is the global
    index of the first path, so chunks of one logical batch can be produced
    independently and concatenated.
    """

    dim: int
    grid: TimeGrid
    seed: int
    data: np.ndarray = field(repr=False)
    kind: PathKind
    method: str = ""
    h: float | None = None
    start: int = 0

    def __post_init__(self):
        self.kind = PathKind(self.kind)
        data = np.asarray(self.data, dtype=float)
        expected = (self.grid.n_steps + 1, self.dim)
        if data.ndim != 3 or data.shape[1:] != expected:
            raise ValueError(f"data shape {data.shape} does not match (count, {expected[0]}, {expected[1]})")
        if data.shape[0] < 1:
            raise ValueError("a batch needs at least one path")
        if not np.all(np.isfinite(data)):
            raise ValueError("path data must be finite")
        self.data = data

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def increments(self) -> np.ndarray:
        return np.diff(self.data, axis=1)

    def at_time(self, index: int = -1) -> np.ndarray:
        return self.data[:, index, :]

    def meta(self) -> dict:
        return {
            "h": self.h,
            "T": self.grid.t_end,
            "n": self.grid.n_steps,
            "seed": self.seed,
            "method": self.method,
            "kind": self.kind.value,
            "dim": self.dim,
            "count": self.count,
            "start": self.start,
        }

    def replace_data(self, data, kind: PathKind | None = None, method: str | None = None) -> "PathBatch":
        return PathBatch(
            self.dim, self.grid, self.seed, data,
            self.kind if kind is None else kind,
            self.method if method is None else method,
            self.h, self.start,
        )

    # -- export -----------------------------------------------------------

    def to_csv(self, path) -> None:
        """One row per (path, component); a ``#`` metadata line precedes the header."""
        path = Path(path)
        n = self.grid.n_steps
        with path.open("w", newline="") as fh:
            meta = ",".join(f"{k}={v}" for k, v in self.meta().items())
            fh.write(f"# {meta}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "component"] + [f"t{i}" for i in range(n + 1)])
            for p in range(self.count):
                for c in range(self.dim):
                    w.writerow([self.start + p, c] + [repr(float(x)) for x in self.data[p, :, c]])

    @classmethod
    def from_csv(cls, path) -> "PathBatch":
        path = Path(path)
        with path.open() as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise ValueError("missing metadata line")
            meta = dict(item.split("=", 1) for item in first[1:].strip().split(","))
            rows = list(csv.reader(fh))[1:]
        dim, n, count = int(meta["dim"]), int(meta["n"]), int(meta["count"])
        data = np.empty((count, n + 1, dim))
        start = int(meta["start"])
        for row in rows:
            p, c = int(row[0]) - start, int(row[1])
            data[p, :, c] = [float(x) for x in row[2:]]
        h = None if meta["h"] == "None" else float(meta["h"])
        return cls(dim, TimeGrid(float(meta["T"]), n), int(meta["seed"]), data,
                   PathKind(meta["kind"]), meta["method"], h, start)

    def save_npz(self, path) -> None:
        np.savez(path, data=self.data, **{k: np.asarray(str(v)) for k, v in self.meta().items()})

    @classmethod
    def load_npz(cls, path) -> "PathBatch":
        z = np.load(path)
        meta = {k: str(z[k]) for k in z.files if k != "data"}
        h = None if meta["h"] == "None" else float(meta["h"])
        return cls(int(meta["dim"]), TimeGrid(float(meta["T"]), int(meta["n"])), int(meta["seed"]),
                   z["data"], PathKind(meta["kind"]), meta["method"], h, int(meta["start"]))


def concat_batches(batches: list[PathBatch]) -> PathBatch:
    first = batches[0]
    data = np.concatenate([b.data for b in batches], axis=0)
    return PathBatch(first.dim, first.grid, first.seed, data, first.kind, first.method, first.h, first.start)


# ---------------------------------------------------------------------------


def fbm_covariance(h, t, s):
    """``E[B_t B_s] = (t^2H + s^2H - |t-s|^2H) / 2`` (per component)."""
    h = as_hurst(h).h
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("fBm covariance is defined for non-negative times only")
    out = 0.5 * (t ** (2 * h) + s ** (2 * h) - np.abs(t - s) ** (2 * h))
    return float(out) if out.ndim == 0 else out


def covariance_matrix(h, grid: TimeGrid) -> np.ndarray:
    t = grid.nodes[1:]
    return fbm_covariance(h, t[:, None], t[None, :])


@lru_cache(maxsize=32)
def _cholesky_factor(h: float, t_end: float, n_steps: int) -> np.ndarray:
    cov = covariance_matrix(h, TimeGrid(t_end, n_steps))
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"fBm covariance (h={h}, n={n_steps}) is not numerically positive definite: "
            f"pivot {info} (time t={info * t_end / n_steps:.6g}) failed"
        )
    if info < 0:
        raise FactorizationError(f"dpotrf argument {-info} invalid")
    factor.setflags(write=False)
    return factor


def _assemble(increments_or_values: np.ndarray, count: int, n: int, dim: int, cumulative: bool) -> np.ndarray:
    # (count * dim, n) -> (count, n + 1, dim) with a zero initial row
    v = increments_or_values.reshape(count, dim, n).transpose(0, 2, 1)
    if cumulative:
        v = np.cumsum(v, axis=1)
    out = np.zeros((count, n + 1, dim))
    out[:, 1:, :] = v
    return out


def sample_fbm_cholesky(h, grid: TimeGrid, dim: int, count: int, seed: int,
                        start: int = 0, workers: int | None = None) -> PathBatch:
    hp = as_hurst(h)
    n = grid.n_steps
    if n > CHOLESKY_MAX_STEPS:
        raise DomainError(f"Cholesky sampler limited to {CHOLESKY_MAX_STEPS} steps, got {n}")
    factor = _cholesky_factor(hp.h, grid.t_end, n)
    z = rng.normal_block(seed, rng.FBM, start, count, n * dim, workers).reshape(count * dim, n)
    values = z @ factor.T
    return PathBatch(dim, grid, seed, _assemble(values, count, n, dim, False),
                     PathKind.FBM, "cholesky", hp.h, start)


def fgn_autocovariance(h: float, lags: np.ndarray) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    return 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))


@lru_cache(maxsize=32)
def circulant_eigenvalues(h: float, n_steps: int) -> np.ndarray:
    """Eigenvalues of the smallest admissible circulant embedding (unit step).

    The embedding starts at the next power of two >= n_steps and doubles while
    any eigenvalue is materially negative.
    """
    half = 1 << max(0, (n_steps - 1).bit_length())
    while True:
        m = 2 * half
        row = fgn_autocovariance(h, np.concatenate([np.arange(half + 1), np.arange(half - 1, 0, -1)]))
        lam = np.fft.rfft(row).real
        tol = 1e-10 * lam.max()
        if lam.min() >= -tol:
            lam = np.clip(lam, 0.0, None)
            lam.setflags(write=False)
            return lam
        half *= 2
        if 2 * half > CIRCULANT_MAX_EMBEDDING:
            raise FactorizationError(
                f"circulant embedding for h={h}, n={n_steps} has negative eigenvalues "
                f"up to size {m}; min eigenvalue {lam.min():.3e}"
            )


def sample_fbm_circulant(h, grid: TimeGrid, dim: int, count: int, seed: int,
                         start: int = 0, workers: int | None = None) -> PathBatch:
    hp = as_hurst(h)
    n = grid.n_steps
    lam = circulant_eigenvalues(hp.h, n)
    half = lam.size - 1
    m = 2 * half
    z = rng.normal_block(seed, rng.FBM, start, count, m * dim, workers).reshape(count * dim, m)
    spec = np.empty((count * dim, half + 1), dtype=complex)
    spec[:, 0] = np.sqrt(lam[0]) * z[:, 0]
    spec[:, half] = np.sqrt(lam[half]) * z[:, 1]
    scale = np.sqrt(lam[1:half] / 2.0)
    spec[:, 1:half] = scale * (z[:, 2::2][:, : half - 1] + 1j * z[:, 3::2][:, : half - 1])
    fgn = math.sqrt(m) * np.fft.irfft(spec, n=m, axis=1)[:, :n]
    fgn *= grid.dt ** hp.h
    return PathBatch(dim, grid, seed, _assemble(fgn, count, n, dim, True),
                     PathKind.FBM, "circulant", hp.h, start)


def sample_wiener(grid: TimeGrid, dim: int, count: int, seed: int,
                  start: int = 0, workers: int | None = None) -> PathBatch:
    n = grid.n_steps
    z = rng.normal_block(seed, rng.WIENER, start, count, n * dim, workers).reshape(count * dim, n)
    return PathBatch(dim, grid, seed, _assemble(z * math.sqrt(grid.dt), count, n, dim, True),
                     PathKind.WIENER, "wiener", 0.5, start)


def sample_fbm_volterra(h, grid: TimeGrid, w: PathBatch, node: str = "rms") -> PathBatch:
    """``B(t_i) = sum_{j<i} K_H(t_i, s_j*) dW_j`` for the Wiener batch ``w``.

    ``node="rms"`` picks in each cell the point where ``K_H(t_i, .)^2`` equals
    its cell mean, which reproduces ``Var B(t_i) = t_i^2H`` exactly;
    ``node="midpoint"`` evaluates at cell midpoints.  For ``h = 1/2`` the
    output is the running sum of the increments.
    """
    from .kernel_ops import volterra_matrix

    hp = as_hurst(h)
    if w.kind is not PathKind.WIENER:
        raise GridMismatchError(f"expected a Wiener batch, got kind={w.kind.value}")
    if w.grid != grid:
        raise GridMismatchError(f"Wiener grid {w.grid} differs from requested grid {grid}")
    dw = w.increments()  # (count, n, dim)
    if hp.h == 0.5:
        data = np.zeros_like(w.data)
        data[:, 1:, :] = np.cumsum(dw, axis=1)
    else:
        mat = volterra_matrix(hp.h, grid.t_end, grid.n_steps, node)
        data = np.zeros_like(w.data)
        data[:, 1:, :] = np.einsum("ij,pjd->pid", mat, dw)
    return PathBatch(w.dim, grid, w.seed, data, PathKind.FBM, f"volterra-{node}", hp.h, w.start)


def sample_fbm(method: str, h, grid: TimeGrid, dim: int, count: int, seed: int,
               start: int = 0, workers: int | None = None) -> PathBatch:
    """Dispatch on ``method`` in {"cholesky", "circulant", "volterra"}."""
    if method == "cholesky":
        return sample_fbm_cholesky(h, grid, dim, count, seed, start, workers)
    if method == "circulant":
        return sample_fbm_circulant(h, grid, dim, count, seed, start, workers)
    if method == "volterra":
        return sample_fbm_volterra(h, grid, sample_wiener(grid, dim, count, seed, start, workers))
    raise ValueError(f"unknown fBm method {method!r}")
