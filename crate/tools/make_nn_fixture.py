#!/usr/bin/env python3
"""Writes a forward-pass fixture for `domenbv nn-check` using PyTorch.

The network is a narrow instance of the reference layout (three
conv3x3/ReLU/maxpool stages, then two dense layers) for the 5D input
variant. The input stacks a smooth depth channel with the four triangular
partitions of a random utility map.

    python3 tools/make_nn_fixture.py crates/core/tests/fixtures/nn
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

SEED = 20240611
SIZE = 64
WIDTHS = (8, 16, 16)
HIDDEN = 64


def build(in_channels):
    c1, c2, c3 = WIDTHS
    return nn.Sequential(
        nn.Conv2d(in_channels, c1, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(c1, c2, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(c2, c3, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(c3 * (SIZE // 8) ** 2, HIDDEN), nn.ReLU(),
        nn.Linear(HIDDEN, 4),
    )


def header(model, in_channels):
    layers = []
    for m in model:
        if isinstance(m, nn.Conv2d):
            layers.append({"kind": "conv2d", "in_channels": m.in_channels, "out_channels": m.out_channels,
                           "kernel": 3, "stride": 1, "padding": 1})
        elif isinstance(m, nn.MaxPool2d):
            layers.append({"kind": "maxpool2"})
        elif isinstance(m, nn.Flatten):
            layers.append({"kind": "flatten"})
        elif isinstance(m, nn.Linear):
            layers.append({"kind": "dense", "in_features": m.in_features, "out_features": m.out_features})
    return {"variant": "5D", "input_channels": in_channels, "input_height": SIZE, "input_width": SIZE,
            "layers": layers}


def write_exhw(path, model, in_channels):
    head = json.dumps(header(model, in_channels), separators=(",", ":")).encode()
    params = []
    for m in model:
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            params.append(m.weight.detach().numpy().astype("<f4").ravel())
            params.append(m.bias.detach().numpy().astype("<f4").ravel())
    with open(path, "wb") as f:
        f.write(b"EXHW")
        f.write(struct.pack("<II", 1, len(head)))
        f.write(head)
        f.write(np.concatenate(params).tobytes())


def triangle_masks(size):
    """Up/Down/Left/Right regions cut by the image diagonals; diagonal
    pixels belong to Up or Down."""
    ys, xs = np.mgrid[0:size, 0:size]
    a = (2 * xs + 1 - size)
    b = (2 * ys + 1 - size)
    vertical = np.abs(b) >= np.abs(a)
    return [vertical & (b <= 0), vertical & (b > 0), ~vertical & (a < 0), ~vertical & (a >= 0)]


def make_input(rng):
    ys, xs = np.mgrid[0:SIZE, 0:SIZE] / SIZE
    depth = 0.3 + 0.2 * np.sin(5 * xs + 1) * np.cos(3 * ys) + 0.05 * rng.standard_normal((SIZE, SIZE))
    depth = np.clip(depth, 0.0, 1.0)
    depth[rng.random((SIZE, SIZE)) < 0.05] = 0.0
    utility = (rng.random((SIZE, SIZE)) < 0.5 + 0.4 * np.sign(xs - 0.6)).astype(np.float32)
    channels = [depth] + [np.where(m, utility, 0.0) for m in triangle_masks(SIZE)]
    return np.stack(channels).astype(np.float32)


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "fixture")
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(SEED)
    rng = np.random.default_rng(SEED)
    model = build(5).eval()
    x = make_input(rng)
    with torch.no_grad():
        logits = model.double()(torch.from_numpy(x).double().unsqueeze(0))[0].numpy().astype("<f4")
    model = model.float()
    write_exhw(out / "weights.exhw", model, 5)
    (out / "input.f32").write_bytes(x.astype("<f4").tobytes())
    (out / "logits.f32").write_bytes(logits.tobytes())
    sidecar = {"version": 1, "variant": "5D", "weights": "weights.exhw", "input": "input.f32",
               "logits": "logits.f32", "input_shape": [5, SIZE, SIZE], "tolerance": 1e-4}
    (out / "fixture.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    print("logits", logits.tolist())


if __name__ == "__main__":
    main()
