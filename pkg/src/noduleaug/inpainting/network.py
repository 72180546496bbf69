"""Torch modules for the patch inpainting network."""

from __future__ import annotations

import torch
import torch.nn as nn

from .geometry import InpainterSpec


def _conv_block(in_ch, out_ch, transpose=False, act="lrelu", bn=True):
    conv = (nn.ConvTranspose2d if transpose else nn.Conv2d)(
        in_ch, out_ch, kernel_size=4, stride=2, padding=1
    )
    layers = [conv]
    if bn:
        layers.append(nn.BatchNorm2d(out_ch))
    if act == "lrelu":
        layers.append(nn.LeakyReLU(0.2, inplace=True))
    elif act == "relu":
        layers.append(nn.ReLU(inplace=True))
    return layers


class ContextEncoder(nn.Module):
    """Encoder-decoder that predicts the M x M hole from the masked patch.

    Five stride-2 encoder convs take the P x P input down to a bottleneck,
    four stride-2 decoder deconvs bring it back up to M x M (= P/2).
    Output goes through a sigmoid so predictions live in [0, 1].
    """

    def __init__(self, spec: InpainterSpec):
        super().__init__()
        enc_ch = spec.channels("encoder")
        layers = []
        in_ch = 1
        for c in enc_ch:
            layers += _conv_block(in_ch, c)
            in_ch = c
        self.encoder = nn.Sequential(*layers)

        dec_ch = spec.channels("decoder")
        layers = []
        for i, c in enumerate(dec_ch):
            out_ch = dec_ch[i + 1] if i + 1 < len(dec_ch) else 1
            last = i + 1 == len(dec_ch)
            layers += _conv_block(c, out_ch, transpose=True,
                                  act=None if last else "relu", bn=not last)
        layers.append(nn.Sigmoid())
        self.decoder = nn.Sequential(*layers)

    def forward(self, masked: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(masked))


class InteriorDiscriminator(nn.Module):
    """Real/fake discriminator over the M x M inpainted region."""

    def __init__(self, spec: InpainterSpec):
        super().__init__()
        adv_ch = spec.channels("adversarial")
        layers = []
        in_ch = 1
        size = spec.mask_size
        for c in adv_ch:
            layers += _conv_block(in_ch, c)
            in_ch = c
            size //= 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(in_ch * size * size, 1)

    def forward(self, interior: torch.Tensor) -> torch.Tensor:
        feats = self.features(interior)
        return self.head(feats.flatten(1))
