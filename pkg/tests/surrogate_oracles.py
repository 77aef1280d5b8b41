"""Independent reference implementations used by the surrogate and training tests."""
import numpy as np
import torch
from torch import nn

from twophase.core import GridSpec, ScenarioParams, build_geometry_mask
from twophase.surrogates import SurrogateConfig


def spectral_circulant(layer, H, W):
    """Dense matrix of a periodic SpectralConv2d built from explicit complex exponentials.

    The real inverse transform keeps the real part, with bins ``kx = 0`` and
    ``kx = W/2`` counted once and the others twice (Hermitian completion).
    """
    w = layer.weight.detach().double().numpy()
    R = w[..., 0] + 1j * w[..., 1]                     # (cin, cout, rows, mx)
    my, mx = layer.modes_y, layer.modes_x
    rows = list(range(my)) + list(range(H - my + 1, H))
    cin, cout = R.shape[:2]
    j = np.arange(H)
    i = np.arange(W)
    dj = (j[:, None] - j[None, :])                     # p_y - q_y
    di = (i[:, None] - i[None, :])
    K = np.zeros((cout, H, W, cin, H, W))
    for r, ky in enumerate(rows):
        ey = np.exp(2j * np.pi * ky * dj / H)          # (Hp, Hq)
        for kx in range(mx):
            c = 1.0 if kx == 0 or 2 * kx == W else 2.0
            ex = np.exp(2j * np.pi * kx * di / W)      # (Wp, Wq)
            phase = ey[:, None, :, None] * ex[None, :, None, :]   # (Hp, Wp, Hq, Wq)
            for a in range(cin):
                for o in range(cout):
                    K[o, :, :, a] += c * np.real(R[a, o, r, kx] * phase) / (H * W)
    return K.reshape(cout * H * W, cin * H * W)


class ToyModel(nn.Module):
    """Four-parameter bundle model: tanh(a x + b roll(x) + c mask + d), float64."""

    def __init__(self, k=2):
        super().__init__()
        self.cfg = SurrogateConfig(k=k)
        self.p = nn.Parameter(torch.tensor([0.8, 0.15, 0.05, -0.02], dtype=torch.float64))

    def forward(self, x, mask):
        a, b, c, d = self.p
        return torch.tanh(a * x + b * torch.roll(x, 1, -1) + c * mask.to(x.dtype) + d)


def droplet_frames(n_frames=30, grid=GridSpec(48, 32), speed=1, radius=0.3, offset=0):
    """Synthetic record: a tanh droplet translating ``speed`` cells per frame inside the tube."""
    mask = build_geometry_mask(ScenarioParams(0.2, -5.0, (), 0), grid)
    xc, yc = grid.cell_centers()
    dx = grid.dx
    out = []
    for t in range(n_frames):
        cx = ((offset + speed * t) * dx + 1.0) % grid.domain_width
        ddx = (xc - cx + grid.domain_width / 2) % grid.domain_width - grid.domain_width / 2
        r = np.hypot(ddx, yc - 0.875)
        out.append(np.where(mask.fluid, np.tanh((radius - r) / (2 * dx)), 0.0))
    return mask, np.array(out, dtype=np.float32)
