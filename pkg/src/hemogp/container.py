"""Binary container for kernels and snapshot matrices.

Layout (little-endian):
  magic   4s   = b"HKRN"
  version u32  = 1
  kind    u32  (1 kernel, 2 snapshots)
  K       u32  vessel count
  m       u32  snapshots per period
  N       u64  total rows (sum of grid points * m)
  r       u32  retained rank (0 for snapshots)
  s       u32  ensemble size
  has_Y   u8   right singular vectors present (kernel only)
  pad     7x
  T       f64  cardiac period
  energy_threshold f64 (NaN when a fixed rank was requested / snapshots)
  captured_energy  f64 (NaN for snapshots)
  per vessel: vid u32, n_k u32, x grid f64[n_k]
  t grid f64[m]
  payload:
    kernel:    lam f64[r], sigma f64[r], Phi f64[N*r] (row-major),
               Y f64[s*r] (row-major) when has_Y
    snapshots: U f64[N*s] (row-major)
  crc u32 of every preceding byte (zlib.crc32)
"""

import struct
import zlib

import numpy as np

from .errors import FileFormatError

MAGIC = b"HKRN"
VERSION = 1
KIND_KERNEL = 1
KIND_SNAPSHOTS = 2

_HEADER = struct.Struct("<4sIIIIQIIB7xddd")


class _Writer:
    def __init__(self, fh):
        self.fh = fh
        self.crc = 0

    def write(self, data):
        self.fh.write(data)
        self.crc = zlib.crc32(data, self.crc)

    def write_array(self, arr):
        self.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FileFormatError(f"{self.path}: truncated container")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def take_array(self, count):
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _write_grids(w, vessel_ids, x_grids, t_grid):
    for vid, xg in zip(vessel_ids, x_grids):
        w.write(struct.pack("<II", int(vid), len(xg)))
        w.write_array(xg)
    w.write_array(t_grid)


def _read_grids(r, K, m):
    vessel_ids, x_grids = [], []
    for _ in range(K):
        vid, nk = struct.unpack("<II", r.take(8))
        vessel_ids.append(int(vid))
        x_grids.append(r.take_array(nk))
    t_grid = r.take_array(m)
    return vessel_ids, x_grids, t_grid


def save_kernel(kernel, path):
    has_y = kernel.Y is not None
    N, r = kernel.phi.shape
    with open(path, "wb") as fh:
        w = _Writer(fh)
        w.write(_HEADER.pack(
            MAGIC, VERSION, KIND_KERNEL, len(kernel.vessel_ids), kernel.m,
            N, r, kernel.n_samples, 1 if has_y else 0,
            kernel.period,
            kernel.energy_threshold if kernel.energy_threshold is not None else float("nan"),
            kernel.captured_energy,
        ))
        _write_grids(w, kernel.vessel_ids, kernel.x_grids, kernel.t_grid)
        w.write_array(kernel.lam)
        w.write_array(kernel.sigma)
        w.write_array(kernel.phi)
        if has_y:
            w.write_array(kernel.Y)
        fh.write(struct.pack("<I", w.crc))


def save_snapshots(snap, path):
    N, s = snap.U.shape
    with open(path, "wb") as fh:
        w = _Writer(fh)
        w.write(_HEADER.pack(
            MAGIC, VERSION, KIND_SNAPSHOTS, len(snap.vessel_ids), snap.m,
            N, 0, s, 0, snap.period, float("nan"), float("nan"),
        ))
        _write_grids(w, snap.vessel_ids, snap.x_grids, snap.t_grid)
        w.write_array(snap.U)
        fh.write(struct.pack("<I", w.crc))


def _open(path, expect_kind):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if len(data) < _HEADER.size + 4:
        raise FileFormatError(f"{path}: truncated container")
    stored_crc, = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise FileFormatError(f"{path}: checksum mismatch (corrupt container)")
    r = _Reader(data[:-4], path)
    magic, version, kind, K, m, N, rank, s, has_y, T, thr, cap = _HEADER.unpack(
        r.take(_HEADER.size)
    )
    if magic != MAGIC:
        raise FileFormatError(f"{path}: not a container file (bad magic {magic!r})")
    if version != VERSION:
        raise FileFormatError(
            f"{path}: unsupported container version {version} (expected {VERSION})"
        )
    if kind != expect_kind:
        names = {KIND_KERNEL: "kernel", KIND_SNAPSHOTS: "snapshot"}
        raise FileFormatError(
            f"{path}: holds a {names.get(kind, f'kind-{kind}')} payload, "
            f"expected {names[expect_kind]}"
        )
    return r, K, m, N, rank, s, has_y, T, thr, cap


def load_kernel(path):
    from .lowrank import LowRankKernel

    r, K, m, N, rank, s, has_y, T, thr, cap = _open(path, KIND_KERNEL)
    vessel_ids, x_grids, t_grid = _read_grids(r, K, m)
    lam = r.take_array(rank)
    sigma = r.take_array(rank)
    phi = r.take_array(N * rank).reshape(N, rank)
    Y = r.take_array(s * rank).reshape(s, rank) if has_y else None
    if r.pos != len(r.data):
        raise FileFormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return LowRankKernel(
        lam=lam, sigma=sigma, phi=phi, Y=Y, vessel_ids=vessel_ids,
        x_grids=x_grids, t_grid=t_grid, period=T, n_samples=s,
        energy_threshold=(None if np.isnan(thr) else float(thr)),
        captured_energy=float(cap),
    )


def load_snapshots(path):
    from .ensemble import SnapshotMatrix

    r, K, m, N, rank, s, has_y, T, thr, cap = _open(path, KIND_SNAPSHOTS)
    vessel_ids, x_grids, t_grid = _read_grids(r, K, m)
    U = r.take_array(N * s).reshape(N, s)
    if r.pos != len(r.data):
        raise FileFormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return SnapshotMatrix(
        U=U, vessel_ids=vessel_ids, x_grids=x_grids, t_grid=t_grid, period=T,
        seed=-1, samples=[], run_stats=[],
    )
