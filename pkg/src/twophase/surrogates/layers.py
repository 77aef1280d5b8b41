"""Building blocks: periodic convolutions, spectral convolution and phase-aware resampling.

Tensors are ``(batch, channels, H, W)``; ``W`` is the periodic axis.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..core import ConfigurationError


def pad_periodic(x: torch.Tensor, px: int, py: int, periodic: bool = True) -> torch.Tensor:
    """Pad ``px`` columns each side (wrapped when ``periodic``) and ``py`` zero rows."""
    if px:
        if periodic:
            W = x.shape[-1]
            idx = torch.arange(-px, W + px, device=x.device) % W
            x = x.index_select(-1, idx)
        else:
            x = F.pad(x, (px, px, 0, 0))
    if py:
        x = F.pad(x, (0, 0, py, py))
    return x


def with_mask(x, mask):
    return x if mask is None else torch.cat([x, mask], dim=1)


class PeriodicConv2d(nn.Module):
    """``same``-size convolution, circular along W and zero-padded along H."""

    def __init__(self, cin, cout, kernel_size=3, dilation=1, stride=(1, 1), periodic=True, bias=True):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, kernel_size, stride=stride, dilation=dilation, bias=bias)
        self.pad = dilation * (kernel_size - 1) // 2
        self.periodic = periodic

    def forward(self, x):
        return self.conv(pad_periodic(x, self.pad, self.pad, self.periodic))


def group_count(channels: int, groups: int = 8) -> int:
    return math.gcd(channels, groups) or 1


class SpectralConv2d(nn.Module):
    """Truncated Fourier multiplier.

    Keeps vertical wavenumbers ``-(my-1) .. my-1`` and horizontal ``0 .. mx-1``
    of the real FFT; each retained coefficient is multiplied by a learned
    ``cin x cout`` complex matrix. Weights are stored as real tensors with a
    trailing (re, im) axis. With ``periodic=False`` the input is zero-padded
    to twice its width first so the transform no longer wraps around.
    """

    def __init__(self, cin, cout, modes_y, modes_x, periodic=True):
        super().__init__()
        self.cin, self.cout = cin, cout
        self.modes_y, self.modes_x = modes_y, modes_x
        self.periodic = periodic
        scale = 1.0 / (cin * cout)
        self.weight = nn.Parameter(scale * torch.rand(cin, cout, 2 * modes_y - 1, modes_x, 2))

    def check_dims(self, H, W):
        if self.modes_y > H // 2 + 1 or self.modes_x > W // 2 + 1 or 2 * self.modes_y - 1 > H:
            raise ConfigurationError(
                f"spectral modes ({self.modes_y}, {self.modes_x}) exceed the grid Nyquist limit for {H}x{W}")

    def row_index(self, H, device=None):
        my = self.modes_y
        return torch.cat([torch.arange(0, my), torch.arange(H - my + 1, H)]).to(device)

    def forward(self, x):
        B, _, H, W = x.shape
        if not self.periodic:
            x = F.pad(x, (0, W))
        Wp = x.shape[-1]
        self.check_dims(H, Wp)
        xf = torch.fft.rfft2(x, norm="ortho")
        rows = self.row_index(H, x.device)
        sel = xf.index_select(-2, rows)[..., : self.modes_x]
        w = torch.view_as_complex(self.weight)
        out_sel = torch.einsum("biyx,ioyx->boyx", sel, w)
        out = torch.zeros(B, self.cout, H, Wp // 2 + 1, dtype=xf.dtype, device=x.device)
        out[:, :, rows, : self.modes_x] = out_sel
        y = torch.fft.irfft2(out, s=(H, Wp), norm="ortho")
        return y[..., :W]


class PolyphaseDown(nn.Module):
    """Stride-2 convolution whose horizontal sampling phase follows the signal.

    The vertical axis is subsampled at even rows. Horizontally the stride-1
    output is split into even/odd columns and, per sample, the component with
    the larger norm is kept, so an odd circular shift of the input still maps
    to a shift of the output. The chosen phase is returned for the matching
    upsampling step and mask resampling.
    """

    def __init__(self, cin, cout, periodic=True):
        super().__init__()
        self.conv = PeriodicConv2d(cin, cout, 3, stride=(2, 1), periodic=periodic)

    def forward(self, x):
        y = self.conv(x)
        even, odd = y[..., 0::2], y[..., 1::2]
        ne = even.pow(2).sum(dim=(1, 2, 3))
        no = odd.pow(2).sum(dim=(1, 2, 3))
        phase = (no > ne).long()
        out = torch.where(phase.view(-1, 1, 1, 1).bool(), odd, even)
        return out, phase


def downsample_mask(mask, phase):
    """Subsample a ``(B, 1, H, W)`` mask at even rows and per-sample column phase."""
    even, odd = mask[..., 0::2, 0::2], mask[..., 0::2, 1::2]
    return torch.where(phase.view(-1, 1, 1, 1).bool(), odd, even)


def upsample_zeros(x, phase):
    """Insert zeros: input lands on even rows and on the columns of the given phase."""
    B, C, H, W = x.shape
    out = x.new_zeros(B, C, 2 * H, 2 * W)
    out_even = out.clone()
    out_even[..., 0::2, 0::2] = x
    out[..., 0::2, 1::2] = x
    return torch.where(phase.view(-1, 1, 1, 1).bool(), out, out_even)


class PolyphaseUp(nn.Module):
    """Transposed counterpart of :class:`PolyphaseDown` (zero insertion + 3x3 conv)."""

    def __init__(self, cin, cout, periodic=True):
        super().__init__()
        self.conv = PeriodicConv2d(cin, cout, 3, periodic=periodic)

    def forward(self, x, phase, mask=None):
        return self.conv(with_mask(upsample_zeros(x, phase), mask))
