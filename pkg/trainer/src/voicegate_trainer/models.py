"""Torch mirrors of the runtime's reference architectures.

The runtime engine convolves with asymmetric same padding (extra row/column
at the bottom/right) and flattens activations in (height, width, channel)
order; both conventions are reproduced here so an exported bundle computes
the same function the trained model does.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

BATCHNORM_EPS = 1e-3  # must match the runtime engine


class SameConv2d(nn.Module):
    """Conv2d with ceil(input/stride) output size via bottom/right-heavy padding."""

    def __init__(self, in_channels, out_channels, kernel, stride=1):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.conv = nn.Conv2d(in_channels, out_channels, kernel, stride=stride, padding=0)

    def forward(self, x):
        in_h, in_w = x.shape[-2:]
        kh, kw = self.kernel
        out_h = math.ceil(in_h / self.stride)
        out_w = math.ceil(in_w / self.stride)
        pad_h = max((out_h - 1) * self.stride + kh - in_h, 0)
        pad_w = max((out_w - 1) * self.stride + kw - in_w, 0)
        top, left = pad_h // 2, pad_w // 2
        x = F.pad(x, (left, pad_w - left, top, pad_h - top))
        return self.conv(x)


class ChannelsLastFlatten(nn.Module):
    """Flatten (B, C, H, W) in (h, w, c) order to match the runtime layout."""

    def forward(self, x):
        return x.permute(0, 2, 3, 1).reshape(x.shape[0], -1)


class KeywordNet(nn.Module):
    """Two conv/pool blocks and a 3-way head over 40x49 spectrograms.

    Outputs logits; the exported bundle carries softmax as the head activation.
    """

    def __init__(self):
        super().__init__()
        self.conv1 = SameConv2d(1, 16, (8, 20), stride=2)
        self.pool1 = nn.MaxPool2d(2)
        self.conv2 = SameConv2d(16, 32, (4, 10), stride=1)
        self.pool2 = nn.MaxPool2d(2)
        self.flatten = ChannelsLastFlatten()
        self.head = nn.Linear(960, 3)

    def forward(self, x):
        x = self.pool1(F.relu(self.conv1(x)))
        x = self.pool2(F.relu(self.conv2(x)))
        return self.head(self.flatten(x))


class DvectorNet(nn.Module):
    """Batchnorm plus four convs flattening to a 256-dimensional embedding.

    ``num_speakers`` adds a classification head used only during training;
    export drops it.
    """

    def __init__(self, num_speakers: int | None = None):
        super().__init__()
        self.norm = nn.BatchNorm2d(1, eps=BATCHNORM_EPS)
        self.conv1 = SameConv2d(1, 8, (3, 3), stride=1)
        self.pool1 = nn.MaxPool2d(3)
        self.conv2 = SameConv2d(8, 16, (3, 3), stride=1)
        self.pool2 = nn.MaxPool2d(2)
        self.conv3 = SameConv2d(16, 32, (3, 3), stride=2)
        self.conv4 = SameConv2d(32, 64, (3, 3), stride=2)
        self.flatten = ChannelsLastFlatten()
        self.head = nn.Linear(256, num_speakers) if num_speakers else None

    def embed(self, x):
        x = self.norm(x)
        x = self.pool1(F.relu(self.conv1(x)))
        x = self.pool2(F.relu(self.conv2(x)))
        x = F.relu(self.conv3(x))
        x = F.relu(self.conv4(x))
        return self.flatten(x)

    def forward(self, x):
        embedding = self.embed(x)
        if self.head is None:
            return embedding
        return self.head(embedding)
