"""
Exact-arithmetic reference for the JPEG stages used by the analog encoder.

Everything here works on plain numpy arrays. Block functions accept either a
single 8x8 block or a stack of blocks with shape (..., 8, 8).
"""

from dataclasses import dataclass

import numpy as np

N = 8

# ITU-T T.81 Annex K, Table K.1 (luminance, quality 50)
Q50 = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)

LEVEL_SHIFT = 128.0


def build_dct_basis(n=N):
    """Orthonormal DCT-II matrix A, so that Y = A @ X @ A.T."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    a = np.sqrt(2.0 / n) * np.cos((2 * j + 1) * i * np.pi / (2 * n))
    a[0, :] = 1.0 / np.sqrt(n)
    return a


DCT_BASIS = build_dct_basis()


def _zigzag_order(n=N):
    order = []
    for s in range(2 * n - 1):
        diag = [(r, s - r) for r in range(n) if 0 <= s - r < n]
        # even anti-diagonals run bottom-left to top-right
        if s % 2 == 0:
            diag.reverse()
        order.extend(r * n + c for r, c in diag)
    return np.array(order, dtype=np.intp)


ZIGZAG = _zigzag_order()
INVERSE_ZIGZAG = np.argsort(ZIGZAG)


def check_pixel_block(x):
    """Validate a pixel block (or stack of them) and return it as float64."""
    arr = np.asarray(x)
    if arr.shape[-2:] != (N, N):
        raise ValueError(f"pixel block must be 8x8, got shape {arr.shape}")
    if np.any(arr < 0) or np.any(arr > 255):
        raise ValueError("pixel values must lie in [0, 255]")
    if np.issubdtype(arr.dtype, np.floating) and np.any(arr != np.round(arr)):
        raise ValueError("pixel values must be integers")
    return arr.astype(np.float64)


def dct2(x, a=DCT_BASIS):
    """Level-shift by 128 and apply the 2-D DCT: Y = A (X - 128) A^T."""
    x = check_pixel_block(x)
    return a @ (x - LEVEL_SHIFT) @ a.T


def idct2(y, a=DCT_BASIS, level=LEVEL_SHIFT):
    """Inverse of dct2. No clamping; that happens at final pixel output."""
    y = np.asarray(y, dtype=np.float64)
    return a.T @ y @ a + level


def round_half_away(v):
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def quantize(y, q=Q50):
    q = np.asarray(q)
    if np.any(q < 1):
        raise ValueError("quantization table entries must be >= 1")
    return round_half_away(np.asarray(y, dtype=np.float64) / q)


def dequantize(yq, q=Q50):
    return np.asarray(yq, dtype=np.float64) * np.asarray(q)


def zigzag(m):
    m = np.asarray(m)
    if m.shape[-2:] != (N, N):
        raise ValueError(f"expected 8x8 block, got shape {m.shape}")
    return m.reshape(m.shape[:-2] + (N * N,))[..., ZIGZAG]


def inverse_zigzag(seq):
    seq = np.asarray(seq)
    if seq.shape[-1] != N * N:
        raise ValueError(f"zig-zag sequence must have 64 entries, got {seq.shape[-1]}")
    return seq[..., INVERSE_ZIGZAG].reshape(seq.shape[:-1] + (N, N))


# ---------------------------------------------------------------------------
# Image quality metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    ssim: float
    mse: float


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak=255.0):
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / err))


def ssim(a, b, win=8, k1=0.01, k2=0.03, peak=255.0):
    """
    Single-scale SSIM with a uniform win x win window at stride 1.

    Local statistics use population (1/N) moments; the result is the mean
    SSIM over every window position.
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < win:
        raise ValueError(f"ssim needs 2-D images of at least {win}x{win}")
    wa = np.lib.stride_tricks.sliding_window_view(a, (win, win))
    wb = np.lib.stride_tricks.sliding_window_view(b, (win, win))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa**2).mean(axis=(-2, -1)) - mu_a**2
    var_b = (wb**2).mean(axis=(-2, -1)) - mu_b**2
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quality_report(a, b):
    if np.array_equal(np.asarray(a), np.asarray(b)):
        return QualityReport(psnr_db=float("inf"), ssim=1.0, mse=0.0)
    return QualityReport(psnr_db=psnr(a, b), ssim=ssim(a, b), mse=mse(a, b))
