#!/usr/bin/env python3
"""Generate the frozen fixtures bundled with the compass crate.

Produces a synthetic 8x8 grayscale 4-class dataset (train/test splits) and
two small classifiers fitted to it, written in the crate's on-disk model and
dataset formats. Weights are frozen into the repository so every downstream
number is reproducible without retraining.

Run once from the repo root:  python3 scripts/gen_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

OUT = Path(__file__).resolve().parent.parent / "crates" / "compass" / "fixtures"
SEED = 42
N_TRAIN, N_TEST = 240, 80
SIDE = 8
CLASSES = 4


def make_sample(rng, label):
    img = np.zeros((SIDE, SIDE), dtype=np.float64)
    amp = rng.uniform(0.3, 0.9)
    phase = rng.integers(0, 2)
    if label == 0:  # horizontal stripes
        img[phase::2, :] = amp
    elif label == 1:  # vertical stripes
        img[:, phase::2] = amp
    elif label == 2:  # checkerboard
        yy, xx = np.mgrid[0:SIDE, 0:SIDE]
        img[(yy + xx + phase) % 2 == 0] = amp
    else:  # center blob
        cy = rng.integers(2, 6)
        cx = rng.integers(2, 6)
        yy, xx = np.mgrid[0:SIDE, 0:SIDE]
        img = amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 4.0)
    img = img + rng.normal(0.0, 0.35, img.shape)
    return np.clip(img, 0.0, 1.0)


def make_split(rng, n):
    xs = np.zeros((n, 1, SIDE, SIDE), dtype=np.float32)
    ys = np.zeros(n, dtype=np.uint32)
    for i in range(n):
        label = i % CLASSES
        xs[i, 0] = make_sample(rng, label)
        ys[i] = label
    return xs, ys


def write_dataset(path, xs, ys):
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "n": int(xs.shape[0]),
        "input_shape": [1, SIDE, SIDE],
        "class_count": CLASSES,
    }
    (path / "manifest").write_text(json.dumps(manifest, indent=2) + "\n")
    (path / "data.bin").write_bytes(xs.astype("<f4").tobytes())
    (path / "labels.bin").write_bytes(ys.astype("<u4").tobytes())


def write_model(path, name, layers, tensors):
    path.mkdir(parents=True, exist_ok=True)
    param_count = sum(t.size for t in tensors)
    manifest = {
        "format_version": 1,
        "name": name,
        "input_shape": [1, SIDE, SIDE],
        "class_count": CLASSES,
        "layers": layers,
        "param_count": param_count,
    }
    (path / "manifest").write_text(json.dumps(manifest, indent=2) + "\n")
    blob = b"".join(t.astype("<f4").tobytes() for t in tensors)
    assert len(blob) == 4 * param_count
    (path / "weights.bin").write_bytes(blob)


def train(model, xs, ys, epochs):
    xt = torch.tensor(xs, dtype=torch.float32)
    yt = torch.tensor(ys.astype(np.int64))
    opt = torch.optim.Adam(model.parameters(), lr=5e-3)
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(epochs):
        opt.zero_grad()
        loss = loss_fn(model(xt), yt)
        loss.backward()
        opt.step()
    with torch.no_grad():
        acc = (model(xt).argmax(1) == yt).float().mean().item()
    return acc


def accuracy(model, xs, ys):
    with torch.no_grad():
        pred = model(torch.tensor(xs, dtype=torch.float32)).argmax(1).numpy()
    return (pred == ys.astype(np.int64)).mean(), pred


def main():
    rng = np.random.default_rng(SEED)
    torch.manual_seed(SEED)

    xs_train, ys_train = make_split(rng, N_TRAIN)
    xs_test, ys_test = make_split(rng, N_TEST)
    write_dataset(OUT / "synth_train.ds", xs_train, ys_train)
    write_dataset(OUT / "synth_test.ds", xs_test, ys_test)

    mlp = nn.Sequential(
        nn.Flatten(),
        nn.Linear(SIDE * SIDE, 16),
        nn.ReLU(),
        nn.Linear(16, CLASSES),
    )
    mlp_train_acc = train(mlp, xs_train, ys_train, epochs=400)

    # bias-free conv keeps the feature extractor positively homogeneous, so
    # path integrals from a zero baseline stay exactly linear in the path
    # parameter and quadrature error in attribution tests is negligible
    cnn = nn.Sequential(
        nn.Conv2d(1, 4, 3, padding=1, bias=False),
        nn.ReLU(),
        nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(4 * 4 * 4, CLASSES),
    )
    cnn_train_acc = train(cnn, xs_train, ys_train, epochs=400)

    mlp_test_acc, mlp_pred = accuracy(mlp, xs_test, ys_test)
    cnn_test_acc, cnn_pred = accuracy(cnn, xs_test, ys_test)
    disagree = int((mlp_pred != cnn_pred).sum())
    print(f"mlp train={mlp_train_acc:.4f} test={mlp_test_acc:.4f}")
    print(f"cnn train={cnn_train_acc:.4f} test={cnn_test_acc:.4f}")
    print(f"test-split disagreements: {disagree}")
    assert mlp_train_acc >= 0.95 and cnn_train_acc >= 0.95
    assert disagree >= 1

    write_model(
        OUT / "tiny_mlp.model",
        "tiny-mlp",
        [
            {"kind": "flatten"},
            {"kind": "dense", "input": SIDE * SIDE, "output": 16},
            {"kind": "relu"},
            {"kind": "dense", "input": 16, "output": CLASSES},
        ],
        [
            mlp[1].weight.detach().numpy(),
            mlp[1].bias.detach().numpy(),
            mlp[3].weight.detach().numpy(),
            mlp[3].bias.detach().numpy(),
        ],
    )
    write_model(
        OUT / "tiny_cnn.model",
        "tiny-cnn",
        [
            {
                "kind": "conv2d",
                "in_channels": 1,
                "out_channels": 4,
                "kernel": [3, 3],
                "padding": 1,
            },
            {"kind": "relu"},
            {"kind": "max-pool2d", "window": 2},
            {"kind": "flatten"},
            {"kind": "dense", "input": 64, "output": CLASSES},
        ],
        [
            cnn[0].weight.detach().numpy(),
            np.zeros(4, dtype=np.float32),
            cnn[4].weight.detach().numpy(),
            cnn[4].bias.detach().numpy(),
        ],
    )
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
