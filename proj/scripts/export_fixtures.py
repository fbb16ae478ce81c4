#!/usr/bin/env python3
"""Train LeNet-5 and networks A-E on MNIST, quantize, and export fixtures.

Digits come from the npm "mnist" package (10000 28x28 images, values in [0, 1]),
zero-padded to 32x32. Each network is trained with average pooling and ReLU,
then exported at the largest fractional-bit count f <= 16 whose intermediates
stay below 2^34 on the training set (one bit of headroom under the 35-bit
decryption bound). Sample files carry the logits of an integer simulator that
follows the same fixed-point pipeline as the C++ ref_infer.

    python3 scripts/export_fixtures.py --digits /tmp/npmdl/package/src/digits --out fixtures
"""

import argparse
import base64
import json
import os

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

BOUND_BITS = 35
HEADROOM_BITS = 34


def load_digits(path):
    xs, ys = [], []
    for d in range(10):
        with open(os.path.join(path, f"{d}.json")) as fh:
            flat = np.asarray(json.load(fh)["data"], dtype=np.float32)
        imgs = flat.reshape(-1, 28, 28)
        xs.append(imgs)
        ys.append(np.full(len(imgs), d, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    # zero pad, centered: pixel (0, 0) lands at (2, 2)
    x = np.pad(x, ((0, 0), (2, 2), (2, 2)))
    return x[:, None, :, :], y


class Net(nn.Module):
    """Sequence of ("conv", k, pad, in, out) / ("pool", k) / ("fc", g, h)."""

    def __init__(self, spec):
        super().__init__()
        self.spec = spec
        self.mods = nn.ModuleList()
        for s in spec:
            if s[0] == "conv":
                _, k, pad, cin, cout = s
                self.mods.append(nn.Conv2d(cin, cout, k, padding=pad))
            elif s[0] == "fc":
                self.mods.append(nn.Linear(s[1], s[2]))
            else:
                self.mods.append(nn.AvgPool2d(s[1]))

    def forward(self, x):
        n = len(self.spec)
        for i, (s, m) in enumerate(zip(self.spec, self.mods)):
            if s[0] == "fc" and x.dim() > 2:
                x = x.flatten(1)
            x = m(x)
            if i + 1 < n:
                x = F.relu(x)
        return x


def spec_for(name):
    if name == "lenet":
        return [("conv", 5, 0, 1, 6), ("pool", 2), ("conv", 5, 0, 6, 16), ("pool", 2),
                ("conv", 5, 0, 16, 120), ("fc", 120, 84), ("fc", 84, 10)]
    pk = 4 if name in "AB" else 2
    g = (32 // pk) ** 2
    h = {"A": 16, "B": 32, "C": 16, "D": 32, "E": 64}[name]
    return [("conv", 3, 1, 1, 1), ("pool", pk), ("fc", g, h), ("fc", h, 10)]


def train(name, x, y, epochs, seed):
    torch.manual_seed(seed)
    net = Net(spec_for(name))
    opt = torch.optim.Adam(net.parameters(), lr=2e-3)
    xt, yt = torch.from_numpy(x), torch.from_numpy(y)
    for ep in range(epochs):
        perm = torch.randperm(len(xt))
        for i in range(0, len(xt), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = F.cross_entropy(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
    return net


def float_accuracy(net, x, y):
    with torch.no_grad():
        return float((net(torch.from_numpy(x)).argmax(1).numpy() == y).mean())


# --- fixed point ----------------------------------------------------------------------------

def fp(v, f):
    # numpy rint rounds half to even, like the C++ encoder
    return np.rint(np.asarray(v, dtype=np.float64) * (1 << f)).astype(np.int64)


def quantize(net, f):
    layers = []
    for s, m in zip(net.spec, net.mods):
        if s[0] == "conv":
            layers.append({"type": "conv", "k": s[1], "pad": s[2], "in_ch": s[3], "out_ch": s[4],
                           "w": fp(m.weight.detach().numpy(), f), "b": fp(m.bias.detach().numpy(), 2 * f)})
        elif s[0] == "pool":
            layers.append({"type": "avgpool", "k": s[1]})
        else:
            layers.append({"type": "fc", "g": s[1], "h": s[2],
                           "w": fp(m.weight.detach().numpy(), f), "b": fp(m.bias.detach().numpy(), 2 * f)})
    return layers


def int_infer(layers, x, f, zeta):
    """Batched integer pipeline: x is (n, c, h, w) int64 at scale f.
    Returns logits and the max magnitude of every value the client decrypts."""
    cur = x.astype(np.int64)
    peak = 0
    for li, l in enumerate(layers):
        if l["type"] == "conv":
            k, pad = l["k"], l["pad"]
            xp = np.pad(cur, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            n, c, h, w = xp.shape
            oh, ow = h - k + 1, w - k + 1
            cols = np.empty((n, c, k, k, oh, ow), dtype=np.int64)
            for a in range(k):
                for b in range(k):
                    cols[:, :, a, b] = xp[:, :, a:a + oh, b:b + ow]
            out = np.einsum("ncabij,ocab->noij", cols, l["w"]) + l["b"][None, :, None, None]
        elif l["type"] == "avgpool":
            k = l["k"]
            kp = int(np.rint((1 << f) / (k * k)))
            n, c, h, w = cur.shape
            s = cur[:, :, :h // k * k, :w // k * k].reshape(n, c, h // k, k, w // k, k).sum(axis=(3, 5))
            out = s * kp
        else:
            flat = cur.reshape(len(cur), -1)
            out = flat @ l["w"].T + l["b"][None, :]
        peak = max(peak, int(np.abs(out).max()))
        if li + 1 < len(layers):
            cur = np.where(out <= 0, 0, out >> zeta)
        else:
            cur = out
    return cur, peak


def pick_f(net, x):
    for f in range(16, 5, -1):
        layers = quantize(net, f)
        wmax = max(int(np.abs(l["w"]).max()) for l in layers if "w" in l)
        if wmax >= 1 << 31:
            continue
        _, peak = int_infer(layers, fp(x, f), f, f)
        if peak < 1 << HEADROOM_BITS:
            return f, layers
    raise SystemExit("overflow at every f; reduce the input range")


# --- export ---------------------------------------------------------------------------------

def b64(a, dtype):
    return base64.b64encode(np.ascontiguousarray(a, dtype=dtype).tobytes()).decode()


def model_json(name, layers, f):
    out = []
    for l in layers:
        if l["type"] == "conv":
            out.append({"type": "conv", "k": l["k"], "stride": 1, "pad": l["pad"], "in_ch": l["in_ch"],
                        "out_ch": l["out_ch"], "data_b64": b64(l["w"], "<i4"), "bias_b64": b64(l["b"], "<i8")})
        elif l["type"] == "avgpool":
            out.append({"type": "avgpool", "k": l["k"]})
        else:
            out.append({"type": "fc", "g": l["g"], "h": l["h"], "w_b64": b64(l["w"], "<i4"),
                        "b_b64": b64(l["b"], "<i8")})
    return {"f": f, "zeta": f, "meta": {"name": name, "dataset": "mnist", "input": [1, 32, 32]}, "layers": out}


def sample_json(xi, label, logits, f):
    return {"shape": [32, 32], "f": f, "data_b64": b64(xi.reshape(-1), "<i4"), "label": int(label),
            "prediction": int(np.argmax(logits)), "logits_b64": b64(logits, "<i8")}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", default="/tmp/npmdl/package/src/digits")
    ap.add_argument("--out", default="fixtures")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--networks", default="lenet,A,B,C,D,E")
    args = ap.parse_args()
    torch.set_num_threads(os.cpu_count() or 1)

    x, y = load_digits(args.digits)
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(x))
    tr, te = perm[:8000], perm[8000:]
    metrics = {}
    for name in args.networks.split(","):
        epochs = 8 if name == "lenet" else 6
        net = train(name, x[tr], y[tr], epochs, args.seed)
        facc = float_accuracy(net, x[te], y[te])
        f, layers = pick_f(net, x[tr])
        logits, peak = int_infer(layers, fp(x[te], f), f, f)
        qacc = float((logits.argmax(1) == y[te]).mean())
        metrics[name] = {"float_acc": facc, "fixed_acc": qacc, "f": f, "zeta": f,
                         "peak_bits": peak.bit_length(), "train": len(tr), "test": len(te)}
        print(name, metrics[name], flush=True)

        d = os.path.join(args.out, name)
        os.makedirs(os.path.join(d, "samples"), exist_ok=True)
        with open(os.path.join(d, "model.json"), "w") as fh:
            json.dump(model_json(name, layers, f), fh)
        n_samples = 100 if name == "lenet" else 5
        xi = fp(x[te[:n_samples]], f)
        for i in range(n_samples):
            with open(os.path.join(d, "samples", f"s{i:03d}.json"), "w") as fh:
                json.dump(sample_json(xi[i, 0], y[te[i]], logits[i], f), fh)
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2)


if __name__ == "__main__":
    main()
